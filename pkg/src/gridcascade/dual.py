"""Dual (line id, failure generation) representation and training pairs."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cascade import CascadeTrace
from .errors import ParseError, ValidationError

DEFAULT_GMAX = 20


@dataclass(frozen=True)
class DualSequence:
    labels: np.ndarray  # int, length N; 0 = alive, else the failure generation
    t: int


def input_mask(labels: np.ndarray) -> np.ndarray:
    return (np.asarray(labels) > 0).astype(np.int8)


def target_mask(tar: np.ndarray, t: int) -> np.ndarray:
    return (np.asarray(tar) == t + 1).astype(np.int8)


@dataclass(frozen=True)
class TrainingPair:
    inp: np.ndarray
    tar: np.ndarray
    t: int

    @property
    def inpM(self) -> np.ndarray:
        return input_mask(self.inp)

    @property
    def tarM(self) -> np.ndarray:
        return target_mask(self.tar, self.t)

    def to_json(self) -> dict:
        return {"t": self.t, "inp": self.inp.tolist(), "tar": self.tar.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "TrainingPair":
        pair = cls(np.asarray(doc["inp"], dtype=np.int64), np.asarray(doc["tar"], dtype=np.int64), int(doc["t"]))
        if pair.inp.shape != pair.tar.shape:
            raise ParseError("inp and tar lengths differ")
        return pair


def to_dual(trace: CascadeTrace, n_lines: int, g_max: int = DEFAULT_GMAX) -> list[DualSequence]:
    """gen_1..gen_G for one trace; gen_t marks each line with the generation it failed in, up to t."""
    trace.check(n_lines)
    if trace.n_generations > g_max:
        raise ValidationError(f"trace has {trace.n_generations} generations, above g_max={g_max}")
    labels = np.zeros(n_lines, dtype=np.int64)
    out = []
    for t, failed in enumerate(trace.generations, start=1):
        labels[sorted(failed)] = t
        out.append(DualSequence(labels.copy(), t))
    return out


def make_pairs(duals) -> list[TrainingPair]:
    pairs = []
    for a, b in zip(duals, duals[1:]):
        if np.any(b.labels == a.t + 1):
            pairs.append(TrainingPair(a.labels, b.labels, a.t))
    return pairs


def trace_pairs(trace: CascadeTrace, n_lines: int, g_max: int = DEFAULT_GMAX) -> list[TrainingPair]:
    return make_pairs(to_dual(trace, n_lines, g_max))


def from_final(labels) -> tuple[frozenset[int], ...]:
    """Recover generation sets from the last dual sequence."""
    labels = np.asarray(labels)
    return tuple(frozenset(np.flatnonzero(labels == t).tolist()) for t in range(1, int(labels.max()) + 1))


@dataclass(frozen=True)
class DatasetSplit:
    train: list
    val: list
    test: list
    split_seed: int


def split_counts(n: int, ratios) -> tuple[int, int, int]:
    n_train = int(round(ratios[0] * n))
    n_val = int(round(ratios[1] * n))
    n_val = min(n_val, n - n_train)
    return n_train, n_val, n - n_train - n_val


def split_dataset(traces, ratios=(0.6, 0.2, 0.2), seed: int = 0) -> DatasetSplit:
    """Shuffle whole traces by ``seed`` and cut them into train/val/test."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1) > 1e-9:
        raise ValidationError(f"split ratios must be three non-negative numbers summing to 1 (got {ratios})")
    traces = list(traces)
    order = np.random.default_rng(seed).permutation(len(traces))
    n_train, n_val, _ = split_counts(len(traces), ratios)
    pick = [traces[i] for i in order]
    return DatasetSplit(pick[:n_train], pick[n_train : n_train + n_val], pick[n_train + n_val :], seed)


def write_pairs(pairs, path) -> None:
    with open(path, "w") as fh:
        for p in pairs:
            fh.write(json.dumps(p.to_json(), separators=(",", ":")) + "\n")


def read_pairs(path) -> list[TrainingPair]:
    out = []
    try:
        with open(path) as fh:
            for line in fh:
                if line.strip():
                    out.append(TrainingPair.from_json(json.loads(line)))
    except FileNotFoundError as exc:
        raise ParseError(f"{path}: no such file") from exc
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{Path(path)}: {exc}") from exc
    return out


def transform_split(split: DatasetSplit, n_lines: int, g_max: int = DEFAULT_GMAX) -> dict[str, list[TrainingPair]]:
    return {
        name: [p for tr in getattr(split, name) for p in trace_pairs(tr, n_lines, g_max)]
        for name in ("train", "val", "test")
    }
