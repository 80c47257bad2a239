"""Cascading-failure vulnerability analysis with an attention-based dual model."""

__version__ = "0.1.0"
