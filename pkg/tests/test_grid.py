import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridcascade.errors import ParseError, ValidationError
from gridcascade.grid import (
    GridNetwork,
    SynthSpec,
    load_network,
    synthesize_network,
    validate,
    write_network,
)
from gridcascade.powerflow import dc_power_flow

from conftest import make_network, write_json


def test_triangle_file_loads(tmp_path, tri):
    path = tmp_path / "triangle.json"
    write_network(tri, path)
    net = load_network(path)
    assert net.n_lines == 3 and net.n_buses == 3
    assert net == tri


def test_dangling_endpoint_names_line(tmp_path, tri):
    doc = tri.to_dict()
    doc["lines"][2]["to"] = 99
    with pytest.raises(ValidationError, match="line 2"):
        load_network(write_json(tmp_path / "bad.json", doc))


def test_empty_lines_rejected(tmp_path, tri):
    doc = tri.to_dict()
    doc["lines"] = []
    with pytest.raises(ValidationError, match="no lines"):
        load_network(write_json(tmp_path / "bad.json", doc))


def test_malformed_and_missing_files(tmp_path):
    bad = tmp_path / "x.json"
    bad.write_text("{not json")
    with pytest.raises(ParseError):
        load_network(bad)
    with pytest.raises(ParseError, match="nope.json"):
        load_network(tmp_path / "nope.json")
    with pytest.raises(ParseError):
        load_network(write_json(tmp_path / "y.json", {"buses": [{"id": 0}], "lines": []}))


def test_validate_reports_all_violations(tri):
    assert validate(tri) == []
    dup = GridNetwork(tri.buses, tri.lines + (tri.lines[0],), "dup")
    problems = validate(dup)
    assert sum("duplicate line id 0" in p for p in problems) == 1

    two = make_network(4, [(0, 1), (2, 3)])
    problems = validate(two)
    assert len(problems) == 1 and "disconnected" in problems[0]
    assert "[0, 1]" in problems[0] and "[2, 3]" in problems[0]

    bad = make_network(3, [(0, 0), (0, 1), (1, 2)], capacity=[1.0, -1.0, 0.0])
    problems = validate(bad)
    assert any("from_bus equals to_bus" in p for p in problems)
    assert sum("capacity must be > 0" in p for p in problems) == 2


def test_synth_ring_capacities():
    spec = SynthSpec(12, "ring", capacity_margin=1.5)
    net = synthesize_network(spec, seed=7)
    assert net.n_lines == 12 and validate(net) == []
    flows = np.abs(dc_power_flow(net).flows)
    floor = 0.1 * flows.mean()
    np.testing.assert_allclose(net.capacities(), np.maximum(1.5 * flows, floor), rtol=1e-12)


@pytest.mark.parametrize("topology", ["ring", "grid", "random-regular"])
def test_synth_deterministic_and_valid(topology):
    spec = SynthSpec(24, topology)
    a = synthesize_network(spec, seed=3)
    b = synthesize_network(spec, seed=3)
    assert a == b
    assert validate(a) == []
    assert synthesize_network(spec, seed=4) != a


def test_synth_rejects_bad_specs():
    with pytest.raises(ValidationError):
        synthesize_network(SynthSpec(2, "ring"), seed=0)
    with pytest.raises(ValidationError):
        synthesize_network(SynthSpec(12, "ring", capacity_margin=1.0), seed=0)
    with pytest.raises(ValidationError, match="impossible"):
        synthesize_network(SynthSpec(7, "random-regular", degree=3), seed=0)


finite = st.floats(min_value=0, max_value=1e6, allow_nan=False, allow_infinity=False)
positive = st.floats(min_value=1e-6, max_value=1e6, allow_nan=False, allow_infinity=False)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(finite, finite), min_size=3, max_size=3),
       st.lists(st.tuples(positive, positive), min_size=3, max_size=3))
def test_round_trip_bit_exact(tmp_path_factory, bus_vals, line_vals):
    net = make_network(3, [(0, 1), (0, 2), (2, 1)], [g for g, _ in bus_vals], [d for _, d in bus_vals],
                       [b for b, _ in line_vals], [c for _, c in line_vals])
    path = tmp_path_factory.mktemp("rt") / "n.json"
    write_network(net, path)
    back = load_network(path)
    assert back == net
    assert json.loads(path.read_text()) == net.to_dict()
