import math

import numpy as np
import pytest

from hugeobj.auditors import (AuditorParams, DegeneratePredictorError, audit_sample_access,
                              audit_support_access, rejection_draws, sq_support_oracle)
from hugeobj.distinguishers import Distinguisher, random_sets
from hugeobj.objects import AccessView, DomainSpec
from hugeobj.sets import Bitmap, Interval

from helpers import function_from_table

N = 256
DOM = DomainSpec.indexed(N)
XS = np.arange(N)


def const(c):
    return lambda xs: np.full(np.shape(xs), c, dtype=float)


def tabled(values):
    values = np.asarray(values, dtype=float)
    return lambda xs: values[np.asarray(xs)]


def exact_advantage(table, pvals, D):
    return float(np.mean((table - pvals) * D.S.contains(XS)))


def test_params_validation_and_sample_count():
    p = AuditorParams(0.2, 0.1, 0.05)
    assert p.sample_count(8) == math.ceil(8 * math.log(4 * 8 / 0.05) / 0.01)
    assert p.threshold == pytest.approx(0.15)
    assert AuditorParams(0.2, 0.2, 0.05, sample_budget=10).sample_count(3) == 10
    for bad in ((0.1, 0.2, 0.05), (0.1, 0.0, 0.05), (0.1, 0.05, 1.0)):
        with pytest.raises(ValueError):
            AuditorParams(*bad)
    with pytest.raises(ValueError):
        AuditorParams(0.2, 0.2, 0.05).sample_count(2)


def test_exact_predictor_yields_no_finding():
    table = (np.random.default_rng(0).random(N) < 0.4).astype(int)
    f = function_from_table(table)
    dclass = random_sets(DOM, 8, seed=1)
    params = AuditorParams(0.1, 0.05, 0.05)
    assert audit_sample_access(dclass, AccessView(f, "sample"), tabled(table), params,
                               np.random.default_rng(2)) is None


def test_planted_half_set_is_found_with_positive_sign():
    S1 = Interval(0, N // 2)
    f = function_from_table(S1.contains(XS).astype(int))
    D = Distinguisher("set", DOM, S=S1)
    params = AuditorParams(0.3, 0.1, 0.05)
    finding = audit_sample_access([D], AccessView(f, "sample"), const(0.0), params,
                                  np.random.default_rng(3))
    assert finding is not None and finding.distinguisher is D and finding.sign == 1
    assert exact_advantage(f.values, np.zeros(N), D) == 0.5
    assert finding.estimated_advantage >= params.threshold


def test_nearly_multiaccurate_predictor_passes():
    table = (np.random.default_rng(4).random(N) < 0.5).astype(int)
    f = function_from_table(table)
    pvals = 0.99 * table + 0.005
    dclass = random_sets(DOM, 16, seed=5)
    assert max(abs(exact_advantage(table, pvals, D)) for D in dclass) <= 0.01
    params = AuditorParams(0.1, 0.05, 0.05)
    rng = np.random.default_rng(6)
    misses = sum(audit_sample_access(dclass, AccessView(f, "sample"), tabled(pvals), params, rng)
                 is not None for _ in range(40))
    assert misses <= 2


def test_soundness_and_completeness_over_trials():
    rng = np.random.default_rng(7)
    dclass = random_sets(DOM, 8, seed=8)
    S = dclass[3].S.contains(XS)
    table = S.astype(int)  # base 0.5 is off by 0.5 on S and on its complement
    f = function_from_table(table)
    pvals = np.full(N, 0.5)
    eps, gamma, delta = 0.2, 0.1, 0.05
    params = AuditorParams(eps, gamma, delta)
    assert max(abs(exact_advantage(table, pvals, D)) for D in dclass) >= eps
    found, good = 0, 0
    for _ in range(200):
        finding = audit_sample_access(dclass, AccessView(f, "sample"), tabled(pvals), params, rng)
        if finding is None:
            continue
        found += 1
        adv = exact_advantage(table, pvals, finding.distinguisher)
        assert np.sign(adv) == finding.sign
        good += finding.sign * adv >= gamma
    assert found >= (1 - delta) * 200
    assert good >= (1 - delta) * 200 - 3 * math.sqrt(200 * delta)


def test_support_auditor_examples():
    rng = np.random.default_rng(9)
    params = AuditorParams(0.3, 0.1, 0.05)
    table = (rng.random(N) < 0.3).astype(int)
    f = function_from_table(table)
    dclass = random_sets(DOM, 8, seed=10)
    assert audit_support_access(dclass, AccessView(f, "support"), tabled(0.7 * table), params,
                                rng, cardinality=N) is None

    S1 = Interval(0, N // 4)
    f1 = function_from_table(S1.contains(XS).astype(int))
    D1 = Distinguisher("set", DOM, S=S1)
    finding = audit_support_access([D1], AccessView(f1, "support"), const(0.5), params, rng,
                                   cardinality=N)
    assert finding is not None and finding.sign == 1
    assert finding.estimated_advantage == pytest.approx(0.75, abs=0.05)

    # a set outside supp f* carrying 0.4 of the model's mass
    S2 = Interval(192, 256)
    pvals = np.where(S2.contains(XS), 1.0, 0.5)
    assert pvals[192:].sum() / pvals.sum() == pytest.approx(0.4)
    D2 = Distinguisher("set", DOM, S=S2)
    finding = audit_support_access([D2], AccessView(f1, "support"), tabled(pvals), params, rng,
                                   cardinality=N)
    assert finding is not None and finding.sign == -1


def test_degenerate_predictor():
    with pytest.raises(DegeneratePredictorError):
        rejection_draws(const(0.0), N, 10, np.random.default_rng(0))


def test_rejection_draws_follow_normalized_law():
    rng = np.random.default_rng(11)
    pvals = np.linspace(0, 1, 64)
    xs = rejection_draws(tabled(pvals), 64, 100_000, rng)
    emp = np.bincount(xs, minlength=64) / xs.size
    assert 0.5 * np.abs(emp - pvals / pvals.sum()).sum() < 0.02


def test_sq_oracle_examples():
    rng = np.random.default_rng(12)
    table = np.zeros(N, dtype=int)
    table[rng.choice(N, 64, replace=False)] = 1
    f = function_from_table(table)
    view = AccessView(f, "support")
    eps = 0.1
    # equal branches: the support term cancels exactly
    assert sq_support_oracle(const(0.3), const(0.3), view, 64, eps, rng) == pytest.approx(0.3)
    # phi(x, y) = y gives the support mass exactly
    assert sq_support_oracle(const(1.0), const(0.0), view, 64, eps, rng) == pytest.approx(64 / N)
    S = np.zeros(N, dtype=bool)
    S[np.flatnonzero(table)[:16]] = True
    S[np.flatnonzero(table == 0)[:40]] = True
    member = Bitmap(S)
    v = sq_support_oracle(member, const(0.0), view, 64, eps, rng)
    assert abs(v - 16 / N) <= eps
    with pytest.raises(ValueError):
        sq_support_oracle(const(1.0), const(0.0), view, N + 1, eps, rng)


def test_sq_oracle_matches_exact_expectation_in_most_trials():
    rng = np.random.default_rng(13)
    eps, ok, trials = 0.1, 0, 60
    for _ in range(trials):
        table = (rng.random(N) < rng.uniform(0.1, 0.9)).astype(int)
        if table.sum() == 0:
            table[0] = 1
        phi1, phi2 = rng.random(N), rng.random(N)
        exact = float(np.mean(np.where(table == 1, phi1, phi2)))
        got = sq_support_oracle(tabled(phi1), tabled(phi2), AccessView(function_from_table(table), "support"),
                                int(table.sum()), eps, rng)
        ok += abs(got - exact) <= eps
    assert ok >= 0.95 * trials
