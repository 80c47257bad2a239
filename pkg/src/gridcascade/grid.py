"""Power network model: buses, lines, loading, validation and synthetic networks."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import networkx as nx
import numpy as np

from .errors import ParseError, ValidationError

TOPOLOGIES = ("ring", "grid", "random-regular")


@dataclass(frozen=True)
class Bus:
    id: int
    generation: float = 0.0
    load: float = 0.0


@dataclass(frozen=True)
class Line:
    id: int
    from_bus: int
    to_bus: int
    susceptance: float
    capacity: float


@dataclass(frozen=True)
class GridNetwork:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    name: str = "network"

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def n_lines(self) -> int:
        return len(self.lines)

    def endpoints(self) -> tuple[np.ndarray, np.ndarray]:
        """(from, to) bus index arrays ordered by line id."""
        src = np.array([ln.from_bus for ln in self.lines], dtype=np.int64)
        dst = np.array([ln.to_bus for ln in self.lines], dtype=np.int64)
        return src, dst

    def susceptances(self) -> np.ndarray:
        return np.array([ln.susceptance for ln in self.lines], dtype=np.float64)

    def capacities(self) -> np.ndarray:
        return np.array([ln.capacity for ln in self.lines], dtype=np.float64)

    def generation(self) -> np.ndarray:
        return np.array([b.generation for b in self.buses], dtype=np.float64)

    def load(self) -> np.ndarray:
        return np.array([b.load for b in self.buses], dtype=np.float64)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "buses": [{"id": b.id, "generation": b.generation, "load": b.load} for b in self.buses],
            "lines": [
                {
                    "id": ln.id,
                    "from": ln.from_bus,
                    "to": ln.to_bus,
                    "susceptance": ln.susceptance,
                    "capacity": ln.capacity,
                }
                for ln in self.lines
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GridNetwork":
        try:
            buses = [Bus(int(b["id"]), float(b["generation"]), float(b["load"])) for b in doc["buses"]]
            lines = [
                Line(int(ln["id"]), int(ln["from"]), int(ln["to"]), float(ln["susceptance"]), float(ln["capacity"]))
                for ln in doc["lines"]
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed network record: {exc!r}") from exc
        buses.sort(key=lambda b: b.id)
        lines.sort(key=lambda ln: ln.id)
        return cls(tuple(buses), tuple(lines), str(doc.get("name", "network")))


def _components(n_buses: int, edges) -> list[list[int]]:
    parent = list(range(n_buses))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    groups: dict[int, list[int]] = {}
    for v in range(n_buses):
        groups.setdefault(find(v), []).append(v)
    return sorted(groups.values(), key=lambda g: g[0])


def validate(network: GridNetwork) -> list[str]:
    """Return every invariant violation; an empty list means the network is valid."""
    problems: list[str] = []
    bus_ids = [b.id for b in network.buses]
    line_ids = [ln.id for ln in network.lines]
    n_b = len(bus_ids)

    if not network.buses:
        problems.append("no buses")
    if not network.lines:
        problems.append("no lines")
    for kind, ids in (("bus", bus_ids), ("line", line_ids)):
        seen: set[int] = set()
        for i in ids:
            if i in seen:
                problems.append(f"duplicate {kind} id {i}")
            seen.add(i)
        if sorted(seen) != list(range(len(seen))):
            problems.append(f"{kind} ids are not dense 0..{len(seen) - 1}")

    for b in network.buses:
        for field in ("generation", "load"):
            v = getattr(b, field)
            if not math.isfinite(v) or v < 0:
                problems.append(f"bus {b.id}: {field} must be finite and >= 0 (got {v})")

    valid_bus = set(bus_ids)
    edges = []
    for ln in network.lines:
        bad_end = False
        for end in (ln.from_bus, ln.to_bus):
            if end not in valid_bus:
                problems.append(f"line {ln.id}: endpoint bus {end} does not exist")
                bad_end = True
        if ln.from_bus == ln.to_bus:
            problems.append(f"line {ln.id}: from_bus equals to_bus ({ln.from_bus})")
        if not (math.isfinite(ln.susceptance) and ln.susceptance > 0):
            problems.append(f"line {ln.id}: susceptance must be > 0 (got {ln.susceptance})")
        if not (math.isfinite(ln.capacity) and ln.capacity > 0):
            problems.append(f"line {ln.id}: capacity must be > 0 (got {ln.capacity})")
        if not bad_end and sorted(valid_bus) == list(range(n_b)):
            edges.append((ln.from_bus, ln.to_bus))

    if n_b and sorted(valid_bus) == list(range(n_b)):
        comps = _components(n_b, edges)
        if len(comps) > 1:
            problems.append(f"network is disconnected: components {comps}")
    return problems


def check(network: GridNetwork) -> GridNetwork:
    problems = validate(network)
    if problems:
        raise ValidationError("; ".join(problems))
    return network


def load_network(path) -> GridNetwork:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ParseError(f"{path}: no such file") from exc
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: top level must be an object")
    return check(GridNetwork.from_dict(doc))


def write_network(network: GridNetwork, path) -> None:
    # repr-based float formatting in json keeps the round trip bit-exact
    Path(path).write_text(json.dumps(network.to_dict(), indent=1) + "\n")


@dataclass(frozen=True)
class SynthSpec:
    buses: int
    topology: str = "random-regular"
    load_scale: float = 100.0
    capacity_margin: float = 1.5
    degree: int = 3
    generator_fraction: float = 0.3


def _topology_edges(spec: SynthSpec, rng: np.random.Generator) -> list[tuple[int, int]]:
    n = spec.buses
    if spec.topology == "ring":
        return [(i, (i + 1) % n) for i in range(n)]
    if spec.topology == "grid":
        rows = max(r for r in range(1, int(math.isqrt(n)) + 1) if n % r == 0)
        cols = n // rows
        edges = []
        for r in range(rows):
            for c in range(cols):
                v = r * cols + c
                if c + 1 < cols:
                    edges.append((v, v + 1))
                if r + 1 < rows:
                    edges.append((v, v + cols))
        return edges
    if spec.topology == "random-regular":
        d = spec.degree
        if d < 2 or d >= n or (n * d) % 2:
            raise ValidationError(f"random-regular degree {d} impossible for {n} buses")
        for _ in range(100):
            g = nx.random_regular_graph(d, n, seed=int(rng.integers(2**31)))
            if nx.is_connected(g):
                return sorted((min(a, b), max(a, b)) for a, b in g.edges())
        raise ValidationError(f"could not draw a connected {d}-regular graph on {n} buses")
    raise ValidationError(f"unknown topology {spec.topology!r}; expected one of {TOPOLOGIES}")


def synthesize_network(spec: SynthSpec, seed: int, name: str | None = None) -> GridNetwork:
    """Build a connected synthetic network whose capacities track base-case flows.

    Capacity of each line is ``capacity_margin * |base flow|``, floored at
    ten percent of the mean absolute base flow.
    """
    from .powerflow import dc_power_flow

    if spec.buses < 3:
        raise ValidationError(f"need at least 3 buses (got {spec.buses})")
    if not spec.capacity_margin > 1:
        raise ValidationError(f"capacity_margin must exceed 1 (got {spec.capacity_margin})")
    rng = np.random.default_rng(seed)
    edges = _topology_edges(spec, rng)
    n = spec.buses

    load = rng.uniform(0.5, 1.5, size=n) * spec.load_scale / n
    n_gen = max(1, int(round(spec.generator_fraction * n)))
    gen_buses = np.sort(rng.choice(n, size=n_gen, replace=False))
    share = rng.uniform(0.5, 1.5, size=n_gen)
    generation = np.zeros(n)
    generation[gen_buses] = share / share.sum() * load.sum()
    load[gen_buses] *= 0.5
    susceptance = rng.uniform(0.5, 2.0, size=len(edges))

    buses = tuple(Bus(i, float(generation[i]), float(load[i])) for i in range(n))
    provisional = GridNetwork(
        buses,
        tuple(Line(k, a, b, float(susceptance[k]), 1.0) for k, (a, b) in enumerate(edges)),
        name or f"{spec.topology}-{n}",
    )
    flows = np.abs(dc_power_flow(provisional, ()).flows)
    floor = 0.1 * flows.mean() if flows.mean() > 0 else 1.0
    caps = np.maximum(spec.capacity_margin * flows, floor)
    lines = tuple(
        Line(ln.id, ln.from_bus, ln.to_bus, ln.susceptance, float(caps[ln.id])) for ln in provisional.lines
    )
    return check(GridNetwork(buses, lines, provisional.name))


def triangle(capacities=(10.0, 10.0, 10.0)) -> GridNetwork:
    """Three buses, unit susceptances; bus 0 exports one unit to bus 1.

    Lines are 0-1, 0-2 and 2-1.
    """
    buses = (Bus(0, 1.0, 0.0), Bus(1, 0.0, 1.0), Bus(2, 0.0, 0.0))
    lines = (
        Line(0, 0, 1, 1.0, capacities[0]),
        Line(1, 0, 2, 1.0, capacities[1]),
        Line(2, 2, 1, 1.0, capacities[2]),
    )
    return GridNetwork(buses, lines, "triangle")
