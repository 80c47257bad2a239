import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridcascade.cascade import CascadeTrace
from gridcascade.dual import (
    TrainingPair,
    from_final,
    make_pairs,
    read_pairs,
    split_dataset,
    to_dual,
    trace_pairs,
    transform_split,
    write_pairs,
)
from gridcascade.errors import ValidationError


def trace(*gens):
    return CascadeTrace(tuple(frozenset(g) for g in gens))


def test_to_dual_examples():
    duals = to_dual(trace({0}, {2}), 4)
    assert [d.labels.tolist() for d in duals] == [[1, 0, 0, 0], [1, 0, 2, 0]]
    assert [d.t for d in duals] == [1, 2]
    assert [d.labels.tolist() for d in to_dual(trace({1, 3}), 4)] == [[0, 1, 0, 1]]


def test_listing_order_irrelevant():
    a = CascadeTrace((frozenset([3, 1, 2]),))
    b = CascadeTrace((frozenset([1, 2, 3]),))
    np.testing.assert_array_equal(to_dual(a, 5)[0].labels, to_dual(b, 5)[0].labels)


def test_make_pairs_examples():
    assert make_pairs(to_dual(trace({1}), 4)) == []
    (pair,) = make_pairs(to_dual(trace({0}, {2}), 4))
    assert pair.inp.tolist() == [1, 0, 0, 0]
    assert pair.tar.tolist() == [1, 0, 2, 0]
    assert pair.inpM.tolist() == [1, 0, 0, 0]
    assert pair.tarM.tolist() == [0, 0, 1, 0]
    assert len(make_pairs(to_dual(trace({0}, {1}, {2, 3}), 5))) == 2


def test_gmax_rejects_long_traces():
    long = trace(*({i} for i in range(6)))
    with pytest.raises(ValidationError, match="g_max"):
        to_dual(long, 6, g_max=5)
    assert len(to_dual(long, 6, g_max=6)) == 6


@st.composite
def traces(draw):
    n = draw(st.integers(2, 30))
    perm = draw(st.permutations(range(n)))
    n_failed = draw(st.integers(1, n))
    n_gen = draw(st.integers(1, n_failed))
    cuts = sorted(draw(st.lists(st.integers(1, n_failed - 1), min_size=n_gen - 1, max_size=n_gen - 1, unique=True))) if n_gen > 1 else []
    bounds = [0, *cuts, n_failed]
    gens = tuple(frozenset(perm[a:b]) for a, b in zip(bounds, bounds[1:]))
    return CascadeTrace(gens), n


@settings(max_examples=200, deadline=None)
@given(traces())
def test_pair_invariants(sample):
    tr, n = sample
    duals = to_dual(tr, n, g_max=n)
    assert from_final(duals[-1].labels) == tr.generations
    pairs = make_pairs(duals)
    assert len(pairs) == tr.n_generations - 1
    for p in pairs:
        t = p.t
        failed_before = frozenset().union(*tr.generations[:t])
        assert set(np.flatnonzero(p.inpM)) == failed_before
        assert set(np.flatnonzero(p.tarM)) == tr.generations[t]
        assert p.inpM.sum() < n
        g, g2 = p.inp, p.tar
        assert np.all(g2[g > 0] == g[g > 0])
        assert set(np.unique(g2[g == 0])) <= {0, t + 1}
        assert p.tarM.sum() >= 1


def test_split_counts_and_determinism():
    trs = [trace({i}, {i + 1}) for i in range(10)]
    a = split_dataset(trs, seed=4)
    assert (len(a.train), len(a.val), len(a.test)) == (6, 2, 2)
    b = split_dataset(trs, seed=4)
    assert a.train == b.train and a.val == b.val and a.test == b.test
    assert set().union(*[set(map(id, s)) for s in (a.train, a.val, a.test)]) == set(map(id, trs))


def test_split_bad_ratios():
    with pytest.raises(ValidationError):
        split_dataset([], ratios=(0.5, 0.2, 0.2))


def test_pairs_never_straddle_splits():
    trs = [trace({i}, {i + 10}, {i + 20}) for i in range(10)]
    split = split_dataset(trs, seed=1)
    pairs = transform_split(split, 30)
    for name in ("train", "val", "test"):
        own = {p.inp.tobytes() for tr in getattr(split, name) for p in trace_pairs(tr, 30)}
        assert {p.inp.tobytes() for p in pairs[name]} == own
        assert len(pairs[name]) == 2 * len(getattr(split, name))


def test_pairs_file_round_trip(tmp_path):
    pairs = make_pairs(to_dual(trace({0, 4}, {2}, {1, 3}), 6))
    path = tmp_path / "p.jsonl"
    write_pairs(pairs, path)
    back = read_pairs(path)
    for a, b in zip(pairs, back):
        assert a.t == b.t
        np.testing.assert_array_equal(a.inp, b.inp)
        np.testing.assert_array_equal(a.tarM, b.tarM)
        np.testing.assert_array_equal(a.inpM, b.inpM)
    assert isinstance(back[0], TrainingPair)
