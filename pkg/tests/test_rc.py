import math
import random

import pytest

from anyspace import dtree as dt
from anyspace.oracle import joint_prob, random_evidence, random_factor_set, random_order
from anyspace.rc import (
    CacheFactor, Session, admitted_indices, cache_admission, exact_calls_check, full_cache_cells,
    predicted_calls, rc_query, rc_query_forgetting, retrieval_count, tradeoff_curve,
)


def corpus(n, seed=0, **kw):
    rng = random.Random(seed)
    for _ in range(n):
        net = random_factor_set(rng, **kw)
        yield rng, net, random_order(rng, net)


def test_twovar_marginal(twovar):
    net, order = twovar
    tree = dt.el2dt(net, order)
    s = Session(tree, CacheFactor.full(tree))
    assert rc_query(s) == pytest.approx(1.0, abs=1e-15)
    # [DERIVED] .32 + .28
    assert rc_query(s, {0: 0}) == pytest.approx(.60, abs=1e-15)
    assert rc_query(s, {0: 1, 1: 1}) == pytest.approx(.30, abs=1e-15)


def test_fivevar_against_oracle(fivevar):
    net, order = fivevar
    for tree in (dt.el2dt(net, order), dt.el2sdt(net, order)):
        for cf in (CacheFactor.full(tree), CacheFactor.none(tree), CacheFactor.uniform(tree, .5, 3)):
            s = Session(tree, cf)
            assert rc_query(s) == pytest.approx(1.0, rel=1e-12)
            for e in ({4: 0}, {0: 1, 4: 0}, {2: 1, 3: 0}):
                assert rc_query(s, e) == pytest.approx(joint_prob(net, e), rel=1e-12)


def test_session_is_reusable(fivevar):
    net, order = fivevar
    tree = dt.el2dt(net, order)
    s = Session(tree, CacheFactor.full(tree))
    first = rc_query(s, {4: 0})
    rc_query(s, {4: 1})
    assert rc_query(s, {4: 0}) == first
    assert s.recorded == [-1] * 5


def test_context_keyed_cache_is_sound_and_saves_calls(fivevar):
    # entries are keyed by context only, not by the whole recorded instantiation;
    # the answer must not change while the number of calls drops
    net, order = fivevar
    tree = dt.el2dt(net, order)
    assert any(set(n.context) < set(n.acutset) for n in tree.nodes)
    full, none = Session(tree, CacheFactor.full(tree)), Session(tree, CacheFactor.none(tree))
    e = {4: 0}
    assert rc_query(full, e) == pytest.approx(rc_query(none, e), rel=1e-14)
    assert sum(exact_calls_check(full)) < sum(exact_calls_check(none))
    assert sum(st.hits for st in full.stats) > 0


def test_closed_form_call_counts():
    for _, net, order in corpus(30, seed=11):
        tree = dt.el2dt(net, order)
        s = Session(tree, CacheFactor.none(tree))
        rc_query(s)
        assert exact_calls_check(s) == [tree.count(n.acutset) for n in tree.nodes]
        s = Session(tree, CacheFactor.full(tree))
        rc_query(s)
        calls = exact_calls_check(s)
        for n in tree.nodes:
            if n.parent is not None:
                p = tree.nodes[n.parent]
                assert calls[n.id] == tree.count(p.cutset) * tree.count(p.context)


def test_prediction_matches_closed_forms(fivevar):
    net, order = fivevar
    tree = dt.el2dt(net, order)
    none = predicted_calls(tree, CacheFactor.none(tree))
    assert none == [float(tree.count(n.acutset)) for n in tree.nodes]
    assert predicted_calls(tree, CacheFactor.full(tree))[0] == 1.0


def test_prediction_exact_for_mixed_discrete():
    rng = random.Random(5)
    for _, net, order in corpus(30, seed=12):
        tree = dt.el2dt(net, order)
        cf = CacheFactor.cached(tree, [n.id for n in tree.internal() if rng.random() < .5])
        s = Session(tree, cf)
        rc_query(s)
        assert exact_calls_check(s) == predicted_calls(tree, cf)


def test_retrieval_count_hand_trace(fivevar):
    net, _ = fivevar
    tree = dt.compute_sets(net, ((0, 1), (2, (3, 4))))
    cf = CacheFactor.full(tree)
    # [DERIVED] node 4 has context {B}, the root cuts on B only
    assert retrieval_count(tree, cf, 4) == 0
    assert retrieval_count(tree, cf, 0) == 0
    # node 6: context {B,C}; parent 4 is cached with context {B} and cutset {C}
    assert retrieval_count(tree, cf, 6) == 0
    cf2 = CacheFactor.cached(tree, [0, 1, 6])
    # with node 4 uncached the walk reaches the root: {C} u {B} minus {B,C}
    assert retrieval_count(tree, cf2, 6) == 0
    with pytest.raises(ValueError):
        retrieval_count(tree, cf2, 4)


def test_lookups_match_retrieval_count():
    rng = random.Random(9)
    checked = 0
    for _, net, order in corpus(40, seed=13):
        tree = dt.el2dt(net, order)
        cf = CacheFactor.cached(tree, [n.id for n in tree.internal() if rng.random() < .6])
        s = Session(tree, cf)
        rc_query(s, track_lookups=True)
        for nid, v in cf.values.items():
            if v == 1.0:
                want = retrieval_count(tree, cf, nid)
                for key in s.caches[nid]:
                    assert s.lookups[nid].get(key, 0) == want
                    checked += 1
    assert checked > 100


def test_forgetting_on_fivevar(fivevar):
    net, order = fivevar
    tree = dt.el2dt(net, order)
    s = Session(tree, CacheFactor.full(tree))
    p = rc_query(s)
    full_peak = s.peak_cells
    q, peak = rc_query_forgetting(Session(tree, CacheFactor.full(tree)))
    assert q == pytest.approx(p, rel=1e-12)
    assert peak < full_peak
    assert (peak, full_peak) == (2, 15)


def test_forgetting_with_evidence_keeps_entries(fivevar):
    net, order = fivevar
    tree = dt.el2dt(net, order)
    s = Session(tree, CacheFactor.full(tree))
    p, _ = rc_query_forgetting(s, {4: 0})
    assert p == pytest.approx(joint_prob(net, {4: 0}), rel=1e-12)
    assert sum(st.evicted for st in s.stats) == 0


def test_forgetting_needs_discrete_cf(fivevar):
    net, order = fivevar
    tree = dt.el2dt(net, order)
    with pytest.raises(ValueError):
        rc_query_forgetting(Session(tree, CacheFactor.uniform(tree, .5)))


def test_fast_mode_same_answer_with_zeros():
    for rng, net, order in corpus(30, seed=14, zero_prob=.4):
        tree = dt.el2dt(net, order)
        e = random_evidence(rng, net, 1)
        a = rc_query(Session(tree, CacheFactor.full(tree)), e)
        b = rc_query(Session(tree, CacheFactor.full(tree)), e, fast=True)
        assert b == pytest.approx(a, rel=1e-12, abs=1e-300)


def test_admitted_indices():
    class T:
        pass

    from anyspace.rc import CacheFactor as CF

    cf = CF({1: .5, 2: 0.0, 3: 1.0}, seed=4)
    assert admitted_indices(cf, 3, 10) is None
    assert admitted_indices(cf, 2, 10) == frozenset()
    a = admitted_indices(cf, 1, 10)
    assert a == admitted_indices(cf, 1, 10)
    assert len(a) == 5 and a <= set(range(10))
    # randomised rounding: expected size is exact
    sizes = [len(admitted_indices(CF({1: .25}, seed=k), 1, 6)) for k in range(2000)]
    assert set(sizes) <= {1, 2}
    assert sum(sizes) / len(sizes) == pytest.approx(1.5, abs=.06)


def test_cache_admission_agrees_with_session(fivevar):
    net, order = fivevar
    tree = dt.el2dt(net, order)
    cf = CacheFactor.uniform(tree, .5, seed=2)
    s = Session(tree, cf)
    for n in tree.internal():
        size = tree.count(n.context)
        chosen = s.admit[n.id]
        for i in range(size):
            assert cache_admission(tree, cf, n.id, i) == (chosen is None or i in chosen)


def test_cache_factor_check(fivevar):
    net, order = fivevar
    tree = dt.el2dt(net, order)
    with pytest.raises(ValueError, match="no entry"):
        Session(tree, CacheFactor({}))
    bad = CacheFactor.full(tree)
    bad.values[0] = 1.5
    with pytest.raises(ValueError, match="outside"):
        Session(tree, bad)
    extra = CacheFactor.full(tree)
    extra.values[tree.leaves()[0].id] = 1.0
    with pytest.raises(ValueError, match="non-internal"):
        Session(tree, extra)


def test_exact_calls_check_needs_a_run(fivevar):
    net, order = fivevar
    tree = dt.el2dt(net, order)
    with pytest.raises(RuntimeError):
        exact_calls_check(Session(tree, CacheFactor.full(tree)))


def test_tradeoff_curve_is_monotone(fivevar):
    net, order = fivevar
    tree = dt.el2dt(net, order)
    top = full_cache_cells(tree)
    pts = tradeoff_curve(tree, [0, 2, 4, 8, top])
    assert pts[0].predicted_calls == sum(predicted_calls(tree, CacheFactor.none(tree)))
    assert pts[-1].predicted_calls == sum(predicted_calls(tree, CacheFactor.full(tree)))
    totals = [p.predicted_calls for p in pts]
    assert totals == sorted(totals, reverse=True)
    assert all(p.used_cells <= p.budget for p in pts)
    with pytest.raises(ValueError):
        tradeoff_curve(tree, [4, 2])


def test_peak_cells_full_cache_is_total_context_size():
    for _, net, order in corpus(20, seed=15):
        tree = dt.el2dt(net, order)
        s = Session(tree, CacheFactor.full(tree))
        rc_query(s)
        assert s.peak_cells == full_cache_cells(tree)
        assert math.isclose(sum(st.cached for st in s.stats), s.peak_cells)
