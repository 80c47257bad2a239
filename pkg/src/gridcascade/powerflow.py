"""DC power flow with per-island proportional rebalancing."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import ValidationError
from .grid import GridNetwork, _components


@dataclass(frozen=True)
class FlowSolution:
    angles: np.ndarray
    flows: np.ndarray
    islands: tuple[tuple[int, ...], ...]
    shed_load: np.ndarray
    curtailed_generation: np.ndarray
    injections: np.ndarray


@dataclass(frozen=True)
class Rebalanced:
    generation: np.ndarray
    load: np.ndarray
    shed: float
    curtailed: float

    @property
    def injection(self) -> np.ndarray:
        return self.generation - self.load


def rebalance_island(generation, load) -> Rebalanced:
    """Scale the larger side of an island down so generation matches load."""
    generation = np.asarray(generation, dtype=np.float64)
    load = np.asarray(load, dtype=np.float64)
    g, d = generation.sum(), load.sum()
    if g == d:
        return Rebalanced(generation.copy(), load.copy(), 0.0, 0.0)
    if g > d:
        return Rebalanced(generation * (d / g), load.copy(), 0.0, float(g - d))
    return Rebalanced(generation.copy(), load * (g / d), float(d - g), 0.0)


class _Arrays:
    """Column arrays of a network, built once and reused across solves."""

    def __init__(self, network: GridNetwork):
        self.n_buses = network.n_buses
        self.n_lines = network.n_lines
        self.src, self.dst = network.endpoints()
        self.b = network.susceptances()
        self.gen = network.generation()
        self.load = network.load()


def _solve(arr: _Arrays, alive: np.ndarray) -> FlowSolution:
    n = arr.n_buses
    alive_idx = np.flatnonzero(alive)
    islands = _components(n, zip(arr.src[alive_idx].tolist(), arr.dst[alive_idx].tolist()))

    angles = np.zeros(n)
    injections = np.zeros(n)
    shed = np.zeros(len(islands))
    curtailed = np.zeros(len(islands))
    for k, members in enumerate(islands):
        idx = np.asarray(members)
        rb = rebalance_island(arr.gen[idx], arr.load[idx])
        shed[k], curtailed[k] = rb.shed, rb.curtailed
        p = rb.injection
        # exact zero sum on the island removes rounding drift before the solve
        p[-1] = -p[:-1].sum()
        injections[idx] = p
        if len(idx) < 2 or not np.any(p):
            continue
        pos = {bus: i for i, bus in enumerate(members)}
        m = len(members)
        lap = np.zeros((m, m))
        for li in alive_idx:
            a, c = arr.src[li], arr.dst[li]
            if a in pos:
                i, j = pos[a], pos[c]
                w = arr.b[li]
                lap[i, i] += w
                lap[j, j] += w
                lap[i, j] -= w
                lap[j, i] -= w
        # slack = lowest bus id = position 0
        try:
            theta = cho_solve(cho_factor(lap[1:, 1:]), p[1:])
        except LinAlgError as exc:
            raise ValidationError(f"singular susceptance matrix on island {members}") from exc
        angles[idx[1:]] = theta

    flows = np.zeros(arr.n_lines)
    flows[alive_idx] = arr.b[alive_idx] * (angles[arr.src[alive_idx]] - angles[arr.dst[alive_idx]])
    return FlowSolution(
        angles=angles,
        flows=flows,
        islands=tuple(tuple(c) for c in islands),
        shed_load=shed,
        curtailed_generation=curtailed,
        injections=injections,
    )


def _alive_mask(n_lines: int, failed_lines) -> np.ndarray:
    alive = np.ones(n_lines, dtype=bool)
    for li in failed_lines:
        if not 0 <= li < n_lines:
            raise ValidationError(f"line id {li} out of range 0..{n_lines - 1}")
        alive[li] = False
    return alive


def dc_power_flow(network: GridNetwork, failed_lines=()) -> FlowSolution:
    """Solve DC power flow on the surviving graph, one rebalanced island at a time."""
    return _solve(_Arrays(network), _alive_mask(network.n_lines, failed_lines))


def net_flow_mismatch(network: GridNetwork, sol: FlowSolution) -> np.ndarray:
    """Per-bus injection minus net outgoing flow; zero for an exact solve."""
    src, dst = network.endpoints()
    out = np.zeros(network.n_buses)
    np.add.at(out, src, sol.flows)
    np.add.at(out, dst, -sol.flows)
    return sol.injections - out
