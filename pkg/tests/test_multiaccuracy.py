import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hugeobj.auditors import AuditorParams, audit_sample_access
from hugeobj.distinguishers import Distinguisher, gap_report, random_sets
from hugeobj.multiaccuracy import (CappedPredictor, LearnerTrace, NonConvergenceError,
                                   bernoulli_model_impl, eval_predictor, lcap,
                                   learn_multiaccurate, potential)
from hugeobj.objects import AccessView, DomainSpec
from hugeobj.sets import Complement, Interval, Whole

from helpers import function_from_table

N = 256
DOM = DomainSpec.indexed(N)
XS = np.arange(N)


def test_lcap_examples():
    assert lcap([0.5]) == 0.5
    assert lcap([0.9, 0.4, -0.6]) == pytest.approx(0.4)
    assert lcap([-0.2]) == 0.0
    assert eval_predictor(CappedPredictor(0.5, DOM), 3) == 0.5


def test_capping_is_order_dependent():
    p = CappedPredictor(0.9, DOM, [(Whole(), 0.4), (Whole(), -0.6)])
    q = CappedPredictor(0.9, DOM, [(Whole(), -0.6), (Whole(), 0.4)])
    assert eval_predictor(p, 0) == pytest.approx(0.4)
    assert eval_predictor(q, 0) == pytest.approx(0.7)


@settings(max_examples=60)
@given(st.floats(-0.5, 1.5), st.lists(st.tuples(st.integers(0, 64), st.integers(0, 64),
                                                st.floats(-1, 1)), max_size=6))
def test_predictor_matches_pointwise_lcap(base, raw_terms):
    dom = DomainSpec.indexed(64)
    terms = [(Interval(min(a, b), max(a, b)), w) for a, b, w in raw_terms]
    p = CappedPredictor(base, dom, terms)
    vals = p.table()
    assert np.all((vals >= 0) & (vals <= 1))
    for x in (0, 17, 63):
        seq = [base] + [w * float(S.contains(np.array([x]))[0]) for S, w in terms]
        assert vals[x] == pytest.approx(lcap(seq), abs=1e-12)


def test_round_trip_through_dicts():
    p = CappedPredictor(0.3, DOM, [(Interval(0, 9), 0.1), (Complement(Interval(5, 7)), -0.05)])
    q = CappedPredictor.from_dict(p.to_dict())
    assert np.array_equal(p.table(), q.table())


def _learn(table, dclass, eps=0.1, gamma=0.05, seed=0, base=0.5, **kw):
    f = function_from_table(table)
    params = AuditorParams(eps, gamma, 0.01)
    return learn_multiaccurate(AccessView(f, "sample"), audit_sample_access, dclass, params,
                               np.random.default_rng(seed), base=base, **kw)


def test_zero_target_on_whole_domain():
    trace = LearnerTrace()
    gamma, eps = 0.05, 0.1
    p = _learn(np.zeros(N), [Distinguisher("set", DOM, S=Whole())], eps, gamma, trace=trace)
    assert p.mean() <= eps
    assert len(trace.updates) <= math.ceil(1 / (2 * gamma)) + 1
    assert all(u["sign"] == -1 for u in trace.updates)


def test_indicator_target_against_set_and_complement():
    S1 = Interval(0, 96)
    table = S1.contains(XS).astype(int)
    dclass = [Distinguisher("set", DOM, S=S1), Distinguisher("set", DOM, S=Complement(S1))]
    eps = 0.1
    p = _learn(table, dclass, eps)
    pv = p.table()
    inside = S1.contains(XS)
    assert abs(pv[inside].mean() - 1) * inside.mean() <= eps
    assert pv[~inside].mean() * (1 - inside.mean()) <= eps


def test_empty_class_returns_base():
    p = _learn(np.ones(N), [], base=0.25)
    assert p.terms == [] and p.base == 0.25


def test_potential_drops_and_update_bound_on_planted_instances():
    gamma, eps = 0.05, 0.1
    for seed in range(3):
        rng = np.random.default_rng(seed)
        dclass = random_sets(DOM, 8, density=0.3, seed=seed)
        table = np.zeros(N, dtype=int)
        for D in dclass[:2]:
            table |= D.S.contains(XS)
        drops = []

        def hook(before, after, finding):
            bt = before.table()
            adv = finding.sign * np.mean((table - bt) * finding.test(XS))
            drops.append((adv, potential(before, table) - potential(after, table)))

        trace = LearnerTrace()
        p = _learn(table, dclass, eps, gamma, seed=seed, trace=trace, on_update=hook)
        assert len(trace.updates) <= math.ceil(4 / gamma**2)
        assert drops, "planted instance should need updates"
        for adv, drop in drops:
            if adv >= gamma:
                assert drop >= gamma**2 * N / 2
        pv = p.table()
        for D in dclass:
            g = D.S.contains(XS)
            assert abs(np.mean((table - pv) * g)) <= eps


def test_model_gap_equals_exact_signed_test_gap():
    rng = np.random.default_rng(5)
    table = (rng.random(N) < 0.35).astype(int)
    f = function_from_table(table)
    dclass = random_sets(DOM, 6, seed=6)
    p = _learn(table, dclass, 0.1, 0.05, seed=7)
    rep = gap_report(dclass, AccessView(f, "sample"), bernoulli_model_impl(p), 40_000, 0.01, rng)
    pv = p.table()
    for D, e in zip(dclass, rep.entries):
        g = D.S.contains(XS)
        assert abs(e.gap - abs(np.mean(table * g) - np.mean(pv * g))) <= 3 * rep.radius


def test_nonconvergence_is_reported():
    table = np.ones(N)
    with pytest.raises(NonConvergenceError):
        _learn(table, [Distinguisher("set", DOM, S=Whole())], max_updates=2, base=0.0)


def test_bernoulli_model_examples():
    rng = np.random.default_rng(8)
    dom = DomainSpec.bitstrings(6)
    ones = bernoulli_model_impl(CappedPredictor(1.0, dom))
    assert ones.draw(500, rng)["y"].min() == 1
    half = bernoulli_model_impl(CappedPredictor(0.5, dom))
    assert abs(half.draw(10_000, rng)["y"].mean() - 0.5) < 0.02
    obj = half.bind(half.new_oracle(rng))
    assert np.array_equal(obj.entry([5, 5, 9]), obj.entry([5, 5, 9]))
    assert obj.entry([5])[0] == obj.entry([5, 5])[1]
