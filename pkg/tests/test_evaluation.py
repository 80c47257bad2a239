import csv

import numpy as np
import pytest

from conftest import make_network
from gridcascade.cascade import CascadeTrace
from gridcascade.evaluation import (
    CSV_FIELDS,
    ExperimentReport,
    comparison_report,
    emit_report,
    initiative_scale_experiment,
    passive_frequency,
    structure_correlation,
    top_set,
)
from gridcascade.errors import ValidationError


def tr(*gens):
    return CascadeTrace(tuple(frozenset(g) for g in gens))


def test_top_set_sizes():
    assert top_set(list(range(10)), 10, 10) == [0]
    assert top_set(list(range(10)), 15, 10) == [0, 1]
    assert top_set(list(range(38)), 10, 38) == [0, 1, 2, 3]
    with pytest.raises(ValidationError):
        top_set([0], 0, 1)


def test_frequency_forced_cases():
    rank = [3, 0, 1, 2]
    traces = [tr({0}, {3}, {1}), tr({1, 2}, {3})]
    assert passive_frequency(traces, rank, 25, "gen2") == 1.0
    assert passive_frequency([tr({3}, {0})], rank, 25) == 0.0
    with pytest.raises(ValidationError):
        passive_frequency([], rank, 25)
    with pytest.raises(ValidationError):
        passive_frequency(traces, [0, 0, 1, 2], 25)


def test_frequency_hand_count():
    rank = [4, 2, 0, 1, 3, 5, 6, 7, 8, 9]  # top 20% = {4, 2}
    traces = [
        tr({0}, {4}, {2}),
        tr({1}, {2, 4}),
        tr({4}, {2}),
        tr({3}, {5}),
        tr({0, 1}),
        tr({6}, {7}, {4}),
        tr({2}, {8}, {9}),
        tr({9}, {4, 8}),
        tr({5}, {6}, {2}, {4}),
        tr({7}, {2}),
    ]
    # gen2 events in {4,2}: t0:1 t1:2 t2:1 t7:1 t9:1 = 6; later gens add t0:1 t5:1 t8:2 = 4
    assert passive_frequency(traces, rank, 20, "gen2") == 6 / 20
    assert passive_frequency(traces, rank, 20, "all") == 10 / 20


def test_attribution_disjoint_singletons():
    n = 40
    ranks = {name: [k] + [j for j in range(n) if j != k] for name, k in zip("ABCD", range(4))}
    traces = [tr({0}, {10, 11}), tr({1}), tr({2}, {12}), tr({3}, {13}, {14})]
    r = initiative_scale_experiment(traces, ranks, 2.5, n, min_count=1)
    assert [r[k].count for k in "ABCD"] == [1, 1, 1, 1]
    assert r["A"].mean_scale == 3 / 40 and r["D"].mean_scale == 3 / 40
    assert not r["A"].low_confidence


def test_attribution_hand_computed():
    n = 20
    ranks = {"att": [0, 1] + list(range(2, 20)), "rnd": [5, 6] + [j for j in range(20) if j not in (5, 6)]}
    traces = [
        tr({0, 9}, {3}),       # att, scale 3/20
        tr({1}),               # att, 1/20
        tr({5}, {7, 8}, {9}),  # rnd, 4/20
        tr({0, 5}, {2}),       # both -> dropped
        tr({10}, {11}),        # neither -> dropped
    ]
    r = initiative_scale_experiment(traces, ranks, 10, n)
    assert r["att"].count == 2 and r["att"].mean_scale == pytest.approx(0.1)
    assert r["rnd"].count == 1 and r["rnd"].mean_scale == pytest.approx(0.2)
    assert r["att"].low_confidence and r["rnd"].low_confidence
    empty = initiative_scale_experiment([tr({10})], ranks, 10, n)
    assert np.isnan(empty["att"].mean_scale) and empty["att"].count == 0


def random_traces(rng, n, count):
    out = []
    for _ in range(count):
        order = rng.permutation(n)[: rng.integers(2, n)]
        cuts = np.sort(rng.choice(np.arange(1, len(order)), size=min(2, len(order) - 1), replace=False))
        out.append(CascadeTrace(tuple(frozenset(c.tolist()) for c in np.split(order, cuts))))
    return out


def test_partition_and_order_invariance():
    rng = np.random.default_rng(0)
    n = 30
    traces = random_traces(rng, n, 200)
    ranks = {k: rng.permutation(n).tolist() for k in ("a", "b", "c", "d")}
    r = initiative_scale_experiment(traces, ranks, 10, n)
    sets = {k: set(top_set(v, 10, n)) for k, v in ranks.items()}
    retained = sum(1 for t in traces if sum(bool(s & t.generations[0]) for s in sets.values()) == 1)
    assert sum(a.count for a in r.values()) == retained
    shuffled = [traces[i] for i in rng.permutation(len(traces))]
    assert initiative_scale_experiment(shuffled, ranks, 10, n) == r
    for k, v in ranks.items():
        for x in (1, 5, 10, 50):
            g2 = passive_frequency(traces, v, x, "gen2")
            assert passive_frequency(traces, v, x, "all") >= g2
            assert passive_frequency(shuffled, v, x, "gen2") == g2


def structure_net(capacity):
    edges = [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)]
    return make_network(4, edges, gen=[2, 0, 0, 0], load=[0, 0.5, 1, 0.5], capacity=capacity)


def test_structure_equal_capacity():
    net = structure_net([3.0] * 5)
    ranks = {"x": {"initiatives": [0, 1, 2, 3, 4], "passives": [4, 3, 2, 1, 0]}}
    rows = structure_correlation(net, ranks)
    caps = [r for r in rows if r["metric"] == "capacity_ratio"]
    assert len(caps) == 3 and all(r["value"] == pytest.approx(1.0) for r in caps)


def test_structure_direct_average():
    from gridcascade.powerflow import dc_power_flow

    cap = np.array([5.0, 1.0, 4.0, 2.0, 3.0])
    net = structure_net(cap.tolist())
    flow = np.abs(dc_power_flow(net).flows)
    low = np.argsort(cap, kind="stable").tolist()
    rows = structure_correlation(net, {"x": {"initiatives": [4, 3, 2, 1, 0], "passives": low}}, top_x=(20, 40))
    got = {(r["metric"], r["top_x"]): r["value"] for r in rows}
    assert got["capacity_ratio", 20] == pytest.approx(1.0 / cap.mean())
    assert got["capacity_ratio", 40] == pytest.approx(1.5 / cap.mean())
    assert got["flow_ratio", 40] == pytest.approx(flow[[4, 3]].mean() / flow.mean())


def full_report():
    rng = np.random.default_rng(1)
    net = structure_net([3.0, 1.0, 2.0, 4.0, 5.0])
    traces = random_traces(rng, 5, 60)
    ranks = {k: {"initiatives": rng.permutation(5).tolist(), "passives": rng.permutation(5).tolist()}
             for k in ("attention", "BC", "CFBC", "LODF")}
    return comparison_report(traces, net, ranks, top_x=(10, 20, 50))


def test_csv_row_count_and_determinism(tmp_path):
    rep = full_report()
    j1, c1 = emit_report(rep, tmp_path / "a")
    j2, c2 = emit_report(full_report(), tmp_path / "b")
    assert c1.read_bytes() == c2.read_bytes() and j1.read_bytes() == j2.read_bytes()
    with open(c1) as fh:
        rows = list(csv.DictReader(fh))
    # 4 algorithms x 3 top_x x 3 metrics, plus structure: 4 x 3 x 2
    assert len(rows) == 4 * 3 * 3 + 4 * 3 * 2
    assert tuple(rows[0]) == CSV_FIELDS


def test_empty_report(tmp_path):
    j, c = emit_report(ExperimentReport(), tmp_path)
    assert c.read_text() == ",".join(CSV_FIELDS) + "\n"
    assert j.read_text().startswith("{")


def test_unwritable_path(tmp_path):
    from gridcascade.errors import GridCascadeError

    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(GridCascadeError):
        emit_report(ExperimentReport(), blocker / "sub")
