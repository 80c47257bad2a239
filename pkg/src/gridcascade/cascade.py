"""Cascade simulation and seeded bulk trace generation."""
from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .grid import GridNetwork
from .powerflow import _alive_mask, _Arrays, _solve


@dataclass(frozen=True)
class CascadeTrace:
    """Generations of failed line ids; ``generations[0]`` are the initial failures."""

    generations: tuple[frozenset[int], ...]
    network_name: str = ""
    seed: int = 0

    @property
    def n_generations(self) -> int:
        return len(self.generations)

    def failed(self) -> frozenset[int]:
        return frozenset().union(*self.generations)

    def to_json(self) -> dict:
        return {"seed": self.seed, "generations": [sorted(g) for g in self.generations]}

    @classmethod
    def from_json(cls, doc: dict, network_name: str = "") -> "CascadeTrace":
        gens = tuple(frozenset(int(i) for i in g) for g in doc["generations"])
        return cls(gens, network_name, int(doc.get("seed", 0)))

    def check(self, n_lines: int) -> "CascadeTrace":
        if not self.generations or not self.generations[0]:
            raise ValidationError("trace has no initial failures")
        seen: set[int] = set()
        for t, g in enumerate(self.generations, start=1):
            if not g:
                raise ValidationError(f"generation {t} is empty")
            if seen & g:
                raise ValidationError(f"generation {t} repeats lines {sorted(seen & g)}")
            if any(not 0 <= i < n_lines for i in g):
                raise ValidationError(f"generation {t} has ids outside 0..{n_lines - 1}")
            seen |= g
        return self


def _cascade(arr: _Arrays, capacity: np.ndarray, initial) -> list[frozenset[int]]:
    alive = _alive_mask(arr.n_lines, initial)
    gens = [frozenset(int(i) for i in initial)]
    while alive.any():
        flows = _solve(arr, alive).flows
        tripped = np.flatnonzero(alive & (np.abs(flows) > capacity))
        if tripped.size == 0:
            break
        alive[tripped] = False
        gens.append(frozenset(tripped.tolist()))
    return gens


def simulate_cascade(network: GridNetwork, initial_failures, seed: int = 0) -> CascadeTrace:
    """Trip initial lines, then every overloaded line per re-solve until nothing new fails."""
    initial = set(initial_failures)
    if not initial:
        raise ValidationError("initial_failures must be non-empty")
    gens = _cascade(_Arrays(network), network.capacities(), initial)
    return CascadeTrace(tuple(gens), network.name, seed)


def cascade_scale(trace: CascadeTrace, n_lines: int) -> float:
    return sum(len(g) for g in trace.generations) / n_lines


def sample_seed(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def _draw_initial(seed: int, index: int, n_lines: int, k_min: int, k_max: int) -> list[int]:
    rng = sample_seed(seed, index)
    k = int(rng.integers(k_min, k_max + 1))
    return sorted(rng.choice(n_lines, size=k, replace=False).tolist())


def _chunk(args):
    network, seed, indices, k_min, k_max = args
    arr = _Arrays(network)
    cap = network.capacities()
    out = []
    for i in indices:
        initial = _draw_initial(seed, i, network.n_lines, k_min, k_max)
        out.append(CascadeTrace(tuple(_cascade(arr, cap, initial)), network.name, i))
    return out


def generate_dataset(
    network: GridNetwork,
    n_samples: int,
    k_min: int = 2,
    k_max: int = 8,
    seed: int = 0,
    workers: int = 1,
    start: int = 0,
) -> list[CascadeTrace]:
    """Run ``n_samples`` cascades from random initial outages.

    Sample ``i`` draws from a generator seeded by ``(seed, start + i)`` alone, so
    output is independent of ``workers`` and any slice can be regenerated alone.
    The trace's ``seed`` field records the sample index.
    """
    if n_samples < 1:
        raise ValidationError("n_samples must be >= 1")
    if not 1 <= k_min <= k_max:
        raise ValidationError(f"need 1 <= k_min <= k_max (got {k_min}, {k_max})")
    if k_max > network.n_lines:
        raise ValidationError(f"k_max={k_max} exceeds the number of lines {network.n_lines}")
    indices = list(range(start, start + n_samples))
    if workers <= 1:
        return _chunk((network, seed, indices, k_min, k_max))
    chunks = [indices[w::workers] for w in range(workers)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_chunk, [(network, seed, c, k_min, k_max) for c in chunks]))
    by_index = {tr.seed: tr for part in parts for tr in part}
    return [by_index[i] for i in indices]


def write_traces(traces, path) -> None:
    with open(path, "w") as fh:
        for tr in traces:
            fh.write(json.dumps(tr.to_json(), separators=(",", ":")) + "\n")


def read_traces(path, network_name: str = "") -> list[CascadeTrace]:
    traces = []
    try:
        with open(path) as fh:
            for n, line in enumerate(fh, start=1):
                if line.strip():
                    traces.append(CascadeTrace.from_json(json.loads(line), network_name))
    except FileNotFoundError as exc:
        raise ParseError(f"{path}: no such file") from exc
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{Path(path)} line {n}: {exc}") from exc
    return traces
