"""End-to-end acceptance suite: one check per criterion, each printing a PASS/FAIL line.

Each ``criterion_N`` returns a JSON-able dict with a ``passed`` flag. Runtimes are
measured outside that dict so the determinism check can compare results byte for byte.
Run as a script to get the lines without pytest.
"""
import itertools
import json
import math
import sys
import time

import numpy as np
import pytest

from hugeobj.auditors import AuditorParams, audit_sample_access, audit_support_access, sq_support_oracle
from hugeobj.distinguishers import (coordinate_tests, gap_report, partition_cells, random_cuts,
                                    random_sets)
from hugeobj.fixed_weight import (FixedWeightSampler, MwSchedule, exact_marginal_distribution,
                                  greedy_topk, learn_fixed_weight, mw_deviation, mw_fixed_weight)
from hugeobj.generators import adjacency, generate
from hugeobj.graph_learners import (NoDenseModelError, SparseReductionParams,
                                    learn_sparse_dense_model, no_dense_model_witness,
                                    upper_uniform_check)
from hugeobj.harness import _jsonable
from hugeobj.multiaccuracy import CappedPredictor, LearnerTrace, learn_multiaccurate
from hugeobj.objects import AccessView, DomainSpec, to_ordinary
from hugeobj.oracle import LazyRandomOracle
from hugeobj.regular_graphs import Partition, degree_audit, learn_uniform_degree, uniform_degree_impl
from hugeobj.sets import BitSet, HashSet, Union, Whole
from hugeobj.support_boost import (learn_support_access, rejection_rounds, rejection_sampler_impl)
from hugeobj.vector_boost import learn_bitstring, learn_outdegree_d, outdegree_impl

from helpers import function_from_table

MASTER_SEED = 20240607
LIMITS = {1: 120, 2: 30, 3: 5, 4: 5, 5: 30, 6: 30, 7: 120, 8: 60, 9: 60, 10: 120, 11: 180,
          12: 30, 13: 60}

RESULTS: dict = {}  # criterion -> (result dict, seconds); filled on first run
LINES: list = []


def _rng(n, *extra):
    return np.random.default_rng(np.random.SeedSequence([MASTER_SEED, n, *extra]))


def _budget_vector(rng, N, k, atoms=5):
    """Random point of the weight-k polytope: a mixture of weight-k indicator vectors."""
    rows = np.zeros((atoms, N))
    for r in rows:
        r[rng.choice(N, k, replace=False)] = 1
    return rng.dirichlet(np.ones(atoms)) @ rows


# --- criteria ------------------------------------------------------------------

def criterion_1():
    rng = _rng(1)
    n, k, eps, gamma = 10, 128, 0.1, 0.05
    f = generate("random-support-k", {"n": n, "k": k, "bias": 1.0}, rng)
    dclass = random_sets(f.domain, 8, seed=int(rng.integers(2**31)))
    params = AuditorParams(eps, gamma, 0.05)
    trace = LearnerTrace()
    h = learn_fixed_weight(AccessView(f, "sample"), k, audit_sample_access, dclass, params, rng,
                           trace=trace)
    weights = [int(h.sampler.materialize(h.new_oracle(rng)).sum()) for _ in range(200)]
    rep = gap_report(dclass, AccessView(f, "sample"), h, 100_000, 0.05, rng)
    bound = eps + 2 * rep.radius
    ok = all(w == k for w in weights) and rep.max_gap <= bound
    return {"passed": ok, "distinct_weights": sorted(set(weights)), "max_gap": rep.max_gap,
            "bound": bound, "updates": len(trace.updates)}


def criterion_2():
    rng = _rng(2)
    worst, bad = 0.0, 0
    for N in (64, 256):
        for _ in range(25):
            k = int(rng.integers(1, N))
            p = _budget_vector(rng, N, k)
            p *= k / p.sum()
            rows = mw_fixed_weight(p, k, 0.1)
            sched = MwSchedule.for_size(N, 0.1)
            bound = 2 * math.sqrt(math.log(2 * N) / sched.T)
            dev = mw_deviation(rows, p)
            bad += int(dev > bound or np.any(rows.sum(1) != k))
            worst = max(worst, dev / bound)
    return {"passed": bad == 0, "instances": 50, "violations": bad, "worst_dev_over_bound": worst}


def criterion_3():
    rng = _rng(3)
    mismatches, below = 0, 0
    combos = [list(c) for c in itertools.combinations(range(10), 4)]
    assert len(combos) == 210
    for _ in range(100):
        w = rng.normal(size=10)
        f = greedy_topk(w, 4)
        got = w[np.flatnonzero(f)].sum()
        best = max(w[c].sum() for c in combos)
        mismatches += int(got != best)
        p = _budget_vector(rng, 10, 4)
        below += int(got < w @ p - 1e-12)
    return {"passed": mismatches == 0 and below == 0, "instances": 100, "mismatches": mismatches,
            "below_fractional": below}


def criterion_4():
    rng = _rng(4)
    worst, bad_weight = 0.0, 0
    for _ in range(50):
        p = _budget_vector(rng, 6, 2)
        p *= 2 / p.sum()
        atoms = exact_marginal_distribution(p, 2)
        marg = sum(w * f for w, f in atoms)
        worst = max(worst, float(np.max(np.abs(marg - p))))
        bad_weight += sum(int(f.sum() != 2) for _, f in atoms)
    return {"passed": worst <= 1e-6 and bad_weight == 0, "max_marginal_error": worst,
            "atoms_off_weight": bad_weight}


def _tree_paths(sampler, oracle):
    tree = sampler.tree
    frontier = [(0, tree.N, sampler.k)]
    broken = 0
    for depth in range(tree.depth):
        nxt = []
        for lo, hi, k in frontier:
            k0, k1 = sampler.children(oracle, (depth, lo, hi), k)
            mid = tree.split(lo, hi)
            broken += int(k0 + k1 != k or not 0 <= k0 <= mid - lo or not 0 <= k1 <= hi - mid)
            nxt += [(lo, mid, k0), (mid, hi, k1)]
        frontier = nxt
    return broken, frontier


def criterion_5():
    rng = _rng(5)
    n, eps = 12, 0.1
    N = 1 << n
    rows = []
    for i in range(4):
        keys = rng.integers(0, 2**62, 6)
        p = CappedPredictor(float(rng.uniform(0.1, 0.6)), DomainSpec.bitstrings(n),
                            [(HashSet(int(s), 0.3), float(w)) for s, w in zip(keys, rng.uniform(-0.3, 0.3, 6))])
        pv = p.table()
        k = int(np.clip(round(pv.sum()) + rng.integers(-200, 200), 0, N))
        sampler = FixedWeightSampler(p, N, k, eps, exact_split=True)
        oracle = LazyRandomOracle(np.random.default_rng(int(rng.integers(2**63))))
        broken, leaves = _tree_paths(sampler, oracle)
        err = float(sum(abs(kz - pv[lo:hi].sum()) for lo, hi, kz in leaves))
        bound = abs(k - pv.sum()) + eps * N / 2
        rows.append({"k": k, "broken_nodes": broken, "leaf_sum": int(sum(kz for *_, kz in leaves)),
                     "level_error": err, "bound": float(bound)})
    ok = all(r["broken_nodes"] == 0 and r["leaf_sum"] == r["k"] and r["level_error"] <= r["bound"]
             for r in rows)
    return {"passed": ok, "broken_nodes": sum(r["broken_nodes"] for r in rows),
            "worst_error_over_bound": max(r["level_error"] / r["bound"] for r in rows),
            "instances": rows}


def criterion_6():
    N, gamma, eps = 256, 0.05, 0.1
    dom = DomainSpec.indexed(N)
    xs = np.arange(N)
    out = []
    for inst in range(3):
        rng = _rng(6, inst)
        dclass = random_sets(dom, 8, density=0.3, seed=int(rng.integers(2**31)))
        table = np.zeros(N, dtype=np.int64)
        for D in dclass[:2]:
            table |= D.S.contains(xs)
        drops = []

        def hook(before, after, finding, table=table, drops=drops):
            drops.append(float(np.sum((table - before.table()) ** 2)
                               - np.sum((table - after.table()) ** 2)))

        trace = LearnerTrace()
        p = learn_multiaccurate(AccessView(function_from_table(table), "sample"),
                                audit_sample_access, dclass, AuditorParams(eps, gamma, 0.01), rng,
                                trace=trace, on_update=hook)
        pv = p.table()
        gap = max(abs(float(np.mean((table - pv) * D.S.contains(xs)))) for D in dclass)
        out.append({"updates": len(trace.updates), "min_drop": min(drops) if drops else None,
                    "max_gap": gap})
    cap, need = math.ceil(4 / gamma**2), gamma**2 * N / 2
    ok = all(o["updates"] >= 1 and o["updates"] <= cap and o["min_drop"] >= need
             and o["max_gap"] <= eps for o in out)
    return {"passed": ok, "update_cap": cap, "drop_bound": need, "instances": out}


def criterion_7():
    rng = _rng(7)
    N, alpha, eps, gamma = 256, 0.25, 0.1, 0.05
    dom = DomainSpec.indexed(N)
    xs = np.arange(N)
    dclass = random_sets(dom, 8, seed=int(rng.integers(2**31)))
    planted = np.flatnonzero(Union([dclass[0].S, dclass[1].S]).contains(xs))
    table = np.zeros(N, dtype=np.int64)
    table[rng.choice(planted, int(alpha * N), replace=False)] = 1
    f = function_from_table(table)
    params = AuditorParams(eps, gamma, 0.05)
    beta = 0.1 * gamma * alpha**2
    audit_drops, cal_drops = [], []

    def hook(kind, before, after, finding):
        drop = float(np.sum((table - before) ** 2) - np.sum((table - after) ** 2))
        (cal_drops if kind == "calibration" else audit_drops).append(drop)

    trace = LearnerTrace()
    p = learn_support_access(AccessView(f, "support"), alpha, audit_support_access, dclass, params,
                             rng, trace=trace, on_update=hook)
    budget = math.ceil(40 / (gamma**2 * alpha**4))
    used = len(trace.updates) + len(trace.calibrations)
    audit_bound = 0.5 * gamma**2 * alpha**2 * N
    cal_bound = 0.9 * beta**2 * N
    h = rejection_sampler_impl(p, rejection_rounds(alpha, 1e-9))
    rep = gap_report(dclass, AccessView(f, "support"), h, 20_000, 0.05, rng)
    rounds = h.draw(20_000, rng)["rounds"]
    want_rounds = 1 / p.table().mean()
    ok = (used <= budget and len(trace.updates) >= 1
          and all(d >= audit_bound for d in audit_drops) and all(d >= cal_bound for d in cal_drops)
          and rep.max_gap <= 2 * eps + 2 * rep.radius
          and abs(rounds.mean() - want_rounds) <= 0.05 * want_rounds)
    return {"passed": ok, "updates": len(trace.updates), "calibrations": len(trace.calibrations),
            "budget": budget, "min_audit_drop": min(audit_drops, default=None),
            "audit_bound": audit_bound, "min_calibration_drop": min(cal_drops, default=None),
            "calibration_bound": cal_bound, "max_gap": rep.max_gap,
            "gap_bound": 2 * eps + 2 * rep.radius, "mean_rounds": float(rounds.mean()),
            "expected_rounds": want_rounds}


def _bit_sets(n):
    return [Whole()] + [BitSet(j, b) for j in range(n) for b in (0, 1)]


def criterion_8():
    rng = _rng(8)
    n, eps, gamma = 6, 0.2, 0.1
    N = 1 << n
    f = generate("noisy-identity", {"n": n, "flip": 0.2}, rng)
    dclass = coordinate_tests(f.domain, _bit_sets(n), n)
    bits = np.stack([(f.values >> j) & 1 for j in range(n)]).astype(float)
    drops = []

    def hook(j, before, after, finding):
        drops.append(float(np.sum((bits[j] - before.table()) ** 2)
                           - np.sum((bits[j] - after.table()) ** 2)))

    trace = LearnerTrace()
    preds = learn_bitstring(AccessView(f, "sample"), dclass, audit_sample_access,
                            AuditorParams(eps, gamma, 0.05), rng, trace=trace, on_update=hook)
    tables = preds.tables()
    xs = np.arange(N)
    gap = max(abs(float(np.mean((bits[D.j] - tables[D.j]) * D.S.contains(xs)))) for D in dclass)
    cap, need = math.ceil(n / gamma**2), gamma**2 * N
    ok = 1 <= len(trace.updates) <= cap and min(drops) >= need and gap <= eps
    return {"passed": ok, "updates": len(trace.updates), "update_cap": cap,
            "min_drop": min(drops), "drop_bound": need, "max_gap": gap}


def criterion_9():
    rng = _rng(9)
    n, d, eps, gamma = 10, 3, 0.2, 0.1
    N = 1 << n
    g = generate("noisy-out-degree", {"n": n, "d": d, "flip": 0.2}, rng)
    sets = [Whole()] + [BitSet(j, 1) for j in range(n)]
    dclass = coordinate_tests(g.vertices, sets, n)
    trace = LearnerTrace()
    preds = learn_outdegree_d(AccessView(g, "support"), d, dclass, audit_sample_access,
                              AuditorParams(eps, gamma, 0.05), rng, trace=trace)
    h = outdegree_impl(preds, d)
    bad = 0
    for _ in range(100):
        rows = h.neighbors(h.new_oracle(rng), rng.integers(0, N, 10))
        bad += sum(np.unique(r).size != d for r in rows)
    # target's averaged edge law: mean over the d out-neighbors of bit j
    avg = np.stack([((g.neighbors >> j) & 1).mean(1) for j in range(n)])
    tables = preds.tables()
    xs = np.arange(N)
    exact_gap = max(abs(float(np.mean((avg[D.j] - tables[D.j]) * D.S.contains(xs)))) for D in dclass)
    rep = gap_report(dclass, AccessView(g, "support"), h, 20_000, 0.05, rng)
    ok = bad == 0 and exact_gap <= eps and rep.max_gap <= eps + 2 * rep.radius
    return {"passed": ok, "neighborhoods": 1000, "bad_neighborhoods": int(bad),
            "updates": len(trace.updates), "predictor_gap": exact_gap,
            "sampled_gap": rep.max_gap, "sampled_bound": eps + 2 * rep.radius}


def criterion_10():
    rng = _rng(10)
    eps, d = 0.05, 6
    g = generate("block-regular", {"N": 1200, "t": 3, "d_in": 2, "d_cross": 2}, rng)
    part = Partition(g.labels)
    fit = learn_uniform_degree(AccessView(g, "support"), part, d, eps, 0.05, rng, samples=50_000)
    h = uniform_degree_impl(part, fit.table, d)
    audits = [degree_audit(h.neighbors(h.new_oracle(rng))) for _ in range(5)]
    cells = partition_cells(part)
    rep = gap_report(cells, AccessView(g, "support"), h, 20_000, 0.05, rng)

    small = generate("block-regular", {"N": 200, "t": 4, "d_in": 3, "d_cross": 1}, rng)
    spart = Partition(small.labels)
    sfit = learn_uniform_degree(AccessView(small, "support"), spart, 6, eps, 0.05, rng,
                                samples=20_000)
    sh = uniform_degree_impl(spart, sfit.table, 6)
    involution = True
    for _ in range(5):
        oracle = sh.new_oracle(rng)
        u = np.repeat(np.arange(200), 6)
        l = np.tile(np.arange(6), 200)
        v, l2 = sh.endpoint(oracle, u, l)
        u3, l3 = sh.endpoint(oracle, v, l2)
        involution &= bool(np.array_equal(u3, u) and np.array_equal(l3, l))
    residuals = [int(np.abs(fit.table.residuals(part, d)).sum()),
                 int(np.abs(sfit.table.residuals(spart, 6)).sum())]
    ok = (all(a["regular"] and a["simple"] for a in audits) and involution
          and rep.max_gap <= eps + 2 * rep.radius and residuals == [0, 0])
    return {"passed": ok, "K": fit.table.K.tolist(), "aborted": fit.aborted,
            "initial_residuals": fit.initial_residuals, "transfers": fit.transfers,
            "graphs_regular_simple": sum(a["regular"] and a["simple"] for a in audits),
            "involution_N200": involution, "max_gap": rep.max_gap,
            "gap_bound": eps + 2 * rep.radius, "residuals_after": residuals}


def criterion_11():
    rng = _rng(11)
    params = SparseReductionParams(4, 1 / 32, 0.1, 0.05)
    g = generate("sparse-random", {"N": 512, "avg_degree": 16}, rng)
    cuts = random_cuts(g.vertices, 8, seed=int(rng.integers(2**31)))
    trace = LearnerTrace()
    h = learn_sparse_dense_model(AccessView(g, "support"), params, cuts, rng=rng, trace=trace)
    rep = gap_report(cuts, AccessView(g, "support"), h, 20_000, 0.05, rng)
    sparse_check = upper_uniform_check(adjacency(g), params.eta, params.gamma, "sampled",
                                       trials=400, rng=rng)

    ctrl = generate("planted-dense", {"N": 512, "avg_degree": 16, "clique": 24}, rng)
    A = adjacency(ctrl)
    try:
        learn_sparse_dense_model(AccessView(ctrl, "support"), params, cuts, rng=rng,
                                 max_updates=400)
        learner_outcome = "model"
    except NoDenseModelError:
        learner_outcome = "no-dense-model"
    verdict = upper_uniform_check(A, params.eta, params.gamma, "sampled", trials=400, rng=rng)
    U, V = verdict.witness
    size = min(U.size, V.size) / A.shape[0]
    witness = no_dense_model_witness(A, U, V, params.gamma, 0.001, size)
    ok = rep.max_gap <= 2 * params.eps + 2 * rep.radius and witness
    return {"passed": ok, "updates": len(trace.updates), "max_gap": rep.max_gap,
            "gap_bound": 2 * params.eps + 2 * rep.radius,
            "sparse_sampled_check": sparse_check.holds, "sparse_worst_ratio": sparse_check.worst_ratio,
            "control_learner": learner_outcome, "control_worst_ratio": verdict.worst_ratio,
            "control_witness": witness}


def criterion_12():
    rng = _rng(12)
    N, eps = 256, 0.1
    ok = 0
    worst = 0.0
    for _ in range(100):
        table = (rng.random(N) < rng.uniform(0.05, 0.95)).astype(np.int64)
        if table.sum() == 0:
            table[int(rng.integers(N))] = 1
        phi1, phi2 = rng.random(N), rng.random(N)
        exact = float(np.mean(np.where(table == 1, phi1, phi2)))
        got = sq_support_oracle(lambda x, v=phi1: v[x], lambda x, v=phi2: v[x],
                                AccessView(function_from_table(table), "support"), int(table.sum()),
                                eps, rng)
        err = abs(got - exact)
        ok += err <= eps
        worst = max(worst, err)
    return {"passed": ok >= 95, "within_eps": int(ok), "instances": 100, "worst_error": worst}


def criterion_13():
    rng = _rng(13)
    n, k = 8, 64
    f = generate("random-support-k", {"n": n, "k": k, "bias": 1.0}, rng)
    dclass = random_sets(f.domain, 8, seed=int(rng.integers(2**31)))
    h = learn_fixed_weight(AccessView(f, "sample"), k, audit_sample_access, dclass,
                           AuditorParams(0.1, 0.05, 0.05), rng)
    o = to_ordinary(h, 128)
    weights, consistent = [], True
    for _ in range(100):
        seed = rng.bytes(o.seed_bytes)
        table = o.bind(seed).table()
        weights.append(int(table.sum()))
        xs = rng.integers(0, 1 << n, 32)
        consistent &= bool(np.array_equal(o.bind(seed).table(), table)
                           and np.array_equal(o.bind(seed).entry(xs), table[xs]))
    r_ro = gap_report(dclass, AccessView(f, "sample"), h, 100_000, 0.05, rng)
    r_ord = gap_report(dclass, AccessView(f, "sample"), o, 100_000, 0.05, rng)
    drift = max(abs(a.gap - b.gap) for a, b in zip(r_ro.entries, r_ord.entries))
    ok = all(w == k for w in weights) and consistent and drift <= 0.03
    return {"passed": ok, "distinct_weights": sorted(set(weights)), "consistent": consistent,
            "gap_drift": drift, "seed_bytes": o.seed_bytes}


CRITERIA = {i: globals()[f"criterion_{i}"] for i in range(1, 14)}


def _run(i):
    t0 = time.perf_counter()
    result = _jsonable(CRITERIA[i]())
    return result, time.perf_counter() - t0


def _summary(result):
    keys = [k for k in result if k not in ("passed", "instances", "K")][:4]
    return ", ".join(f"{k}={_fmt(result[k])}" for k in keys)


def _fmt(v):
    return f"{v:.4g}" if isinstance(v, float) else json.dumps(v)


def _record(i, result, seconds):
    within = seconds <= LIMITS[i]
    status = "PASS" if result["passed"] and within else "FAIL"
    LINES.append(f"criterion {i}: {status} ({_summary(result)}) [{seconds:.1f}s / {LIMITS[i]}s]")
    return status == "PASS"


def _get(i):
    if i not in RESULTS:
        RESULTS[i] = _run(i)
        _record(i, *RESULTS[i])
    return RESULTS[i]


@pytest.mark.parametrize("i", range(1, 14))
def test_criterion(i):
    result, seconds = _get(i)
    assert result["passed"], json.dumps(result, indent=1)
    assert seconds <= LIMITS[i], f"criterion {i} took {seconds:.1f}s, limit {LIMITS[i]}s"


def test_criterion_14_determinism():
    differing = []
    for i in CRITERIA:
        first, _ = _get(i)
        again, _ = _run(i)
        if json.dumps(first, sort_keys=True) != json.dumps(again, sort_keys=True):
            differing.append(i)
    LINES.append(f"criterion 14: {'PASS' if not differing else 'FAIL'} "
                 f"(reruns byte-identical for criteria 1-13; differing={differing})")
    assert not differing


if __name__ == "__main__":
    failed = 0
    for i in CRITERIA:
        result, seconds = _get(i)
        print(LINES[-1], flush=True)
        failed += not (result["passed"] and seconds <= LIMITS[i])
    sys.exit(1 if failed else 0)
