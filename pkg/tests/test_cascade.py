import numpy as np
import pytest

from gridcascade.cascade import (
    CascadeTrace,
    cascade_scale,
    generate_dataset,
    read_traces,
    simulate_cascade,
    write_traces,
)
from gridcascade.errors import ValidationError
from gridcascade.grid import SynthSpec, synthesize_network, triangle
from gridcascade.powerflow import dc_power_flow


@pytest.fixture(scope="module")
def net():
    return synthesize_network(SynthSpec(20, "random-regular"), seed=5)


def test_no_overload_is_fixed_point():
    tr = simulate_cascade(triangle(), {2})
    assert tr.generations == (frozenset({2}),)


def test_triangle_cascade_by_hand():
    # oracle: after losing 0-2 the 0-1 line carries the whole unit (> 0.9);
    # then bus 0 is isolated with generation only and {1, 2} has load only
    net = triangle((0.9, 0.5, 0.5))
    assert dc_power_flow(net, {1}).flows[0] == pytest.approx(1.0)
    tr = simulate_cascade(net, {1})
    assert tr.generations == (frozenset({1}), frozenset({0}))
    final = dc_power_flow(net, {0, 1})
    assert np.all(final.flows == 0)


def test_all_lines_initial():
    assert simulate_cascade(triangle(), {0, 1, 2}).n_generations == 1


def test_invalid_ids():
    with pytest.raises(ValidationError):
        simulate_cascade(triangle(), {5})
    with pytest.raises(ValidationError):
        simulate_cascade(triangle(), set())


def test_cascade_properties(net):
    cap = net.capacities()
    for tr in generate_dataset(net, 60, seed=11):
        tr.check(net.n_lines)
        failed = set()
        for t, g in enumerate(tr.generations):
            failed |= g
            flows = dc_power_flow(net, failed).flows
            over = {i for i in range(net.n_lines) if i not in failed and abs(flows[i]) > cap[i]}
            nxt = tr.generations[t + 1] if t + 1 < tr.n_generations else frozenset()
            # trips fire in the first generation the overload appears, all at once
            assert over == set(nxt)


def test_dataset_deterministic_and_protocol(net):
    a = generate_dataset(net, 40, seed=3)
    assert a == generate_dataset(net, 40, seed=3)
    assert all(2 <= len(tr.generations[0]) <= 8 for tr in a)
    assert [tr.seed for tr in a] == list(range(40))


def test_dataset_slices_reproduce(net):
    full = generate_dataset(net, 30, seed=9)
    part = generate_dataset(net, 10, seed=9, start=20)
    assert part == full[20:]


def test_dataset_worker_invariant(net):
    assert generate_dataset(net, 24, seed=2, workers=3) == generate_dataset(net, 24, seed=2)


def test_k_max_too_large():
    with pytest.raises(ValidationError):
        generate_dataset(triangle(), 3, k_max=8)


def test_cascade_scale():
    assert cascade_scale(CascadeTrace((frozenset({0, 1}),)), 10) == 0.2
    full = CascadeTrace((frozenset({0}), frozenset({1, 2})))
    assert cascade_scale(full, 3) == 1.0


def test_traces_file_round_trip(tmp_path, net):
    traces = generate_dataset(net, 10, seed=1)
    path = tmp_path / "d.jsonl"
    write_traces(traces, path)
    back = read_traces(path, net.name)
    assert [t.generations for t in back] == [t.generations for t in traces]
    assert [t.seed for t in back] == [t.seed for t in traces]
