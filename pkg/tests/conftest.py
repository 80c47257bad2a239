import json

import numpy as np
import pytest

from gridcascade.grid import Bus, GridNetwork, Line, triangle


@pytest.fixture
def tri():
    return triangle()


def make_network(n_buses, edges, gen=None, load=None, susceptance=None, capacity=None, name="t"):
    gen = gen if gen is not None else [0.0] * n_buses
    load = load if load is not None else [0.0] * n_buses
    susceptance = susceptance if susceptance is not None else [1.0] * len(edges)
    capacity = capacity if capacity is not None else [10.0] * len(edges)
    buses = tuple(Bus(i, float(gen[i]), float(load[i])) for i in range(n_buses))
    lines = tuple(
        Line(k, a, b, float(susceptance[k]), float(capacity[k])) for k, (a, b) in enumerate(edges)
    )
    return GridNetwork(buses, lines, name)


def random_connected_network(rng: np.random.Generator, n_buses: int, extra_edges: int, name="rand"):
    """Random spanning tree plus extra edges, random injections and susceptances."""
    edges = []
    for v in range(1, n_buses):
        edges.append((int(rng.integers(0, v)), v))
    tries = 0
    while len(edges) < n_buses - 1 + extra_edges and tries < 1000:
        tries += 1
        a, b = (int(x) for x in rng.choice(n_buses, size=2, replace=False))
        if (a, b) not in edges and (b, a) not in edges:
            edges.append((a, b))
    gen = rng.uniform(0, 5, n_buses) * (rng.random(n_buses) < 0.4)
    gen[0] += 1.0
    load = rng.uniform(0, 2, n_buses)
    return make_network(n_buses, edges, gen, load, rng.uniform(0.2, 3.0, len(edges)),
                        rng.uniform(0.5, 5.0, len(edges)), name)


def write_json(path, doc):
    path.write_text(json.dumps(doc))
    return path


# acceptance criteria report their verdicts here; printed after the run
CRITERIA: dict[int, str] = {}


def record(number: int, ok: bool, detail: str, label: str | None = None) -> None:
    verdict = label or ("PASS" if ok else "FAIL")
    CRITERIA[number] = f"criterion {number:2d}: {verdict}  {detail}"
    print(CRITERIA[number])


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])
