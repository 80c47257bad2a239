"""Exception hierarchy; the CLI maps each class to an exit code."""


class GridCascadeError(Exception):
    exit_code = 4


class ParseError(GridCascadeError):
    """Malformed or missing input file."""

    exit_code = 2


class ValidationError(GridCascadeError, ValueError):
    """Input parsed but violates a model invariant."""

    exit_code = 3


class ShapeError(ValidationError):
    pass


class CheckpointError(GridCascadeError):
    exit_code = 2
