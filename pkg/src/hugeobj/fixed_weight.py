"""Truthful fixed-support-size sampling from a predictor.

Pieces, bottom-up:

* ``greedy_topk``: best weight-k vector against a linear objective.
* ``mw_fixed_weight``: a list of weight-k vectors whose average matches p,
  found by multiplicative weights over the doubled coordinate set.
* ``BucketPlan``: groups coordinates by predictor value so MW only runs on
  one fractional unit per bucket.
* ``FixedWeightSampler``: a lazily walked binary tree that hands support
  budgets from the root to small leaves, where a bucketed sample is drawn.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .auditors import AuditorParams
from .distinguishers import Distinguisher
from .multiaccuracy import CappedPredictor, LearnerTrace, learn_multiaccurate
from .objects import DomainSpec, ImplementationHandle, TABLE_CUTOFF, add_pair_fields
from .oracle import SCHEME_VERSION, as_oracle
from .sets import Whole

SUM_TOL = 1e-9


def greedy_topk(w, k: int, prefer=None) -> np.ndarray:
    """Ones at the k largest weights; ties go to larger ``prefer`` then lower index."""
    w = np.asarray(w, dtype=np.float64)
    N = w.size
    if not 0 <= k <= N:
        raise ValueError(f"k={k} outside [0, {N}]")
    if prefer is None:
        order = np.argsort(-w, kind="stable")
    else:
        order = np.lexsort((np.arange(N), -np.asarray(prefer, dtype=np.float64), -w))
    f = np.zeros(N, dtype=bool)
    f[order[:k]] = True
    return f


@dataclass(frozen=True)
class MwSchedule:
    T: int
    alpha: float
    N: int

    @staticmethod
    def for_size(N: int, eps: float) -> "MwSchedule":
        T = max(1, math.ceil(4 * math.log(2 * N) / eps**2))
        return MwSchedule(T, math.sqrt(math.log(2 * N) / T), N)

    @property
    def bound(self) -> float:
        """Deterministic sup-norm guarantee 2 sqrt(ln(2N)/T) on the averaged output."""
        return 2 * math.sqrt(math.log(2 * self.N) / self.T)


def _check_budget(p: np.ndarray, k: int) -> int:
    if p.size and (p.min() < -SUM_TOL or p.max() > 1 + SUM_TOL):
        raise ValueError("predictor values must lie in [0, 1]")
    if abs(p.sum() - k) > SUM_TOL * max(1, p.size) or k != int(k):
        raise ValueError(f"predictor sums to {p.sum()!r}, expected integer {k}")
    return int(k)


def mw_fixed_weight(p, k: int, eps: float) -> np.ndarray:
    """Rows f^(1..T) with exactly k ones each and mean within the schedule bound of p.

    Log-weights over [2N] are kept with max-subtraction; the greedy objective
    is w+ - w-, which only needs the ratios of the weights.
    """
    p = np.asarray(p, dtype=np.float64)
    k = _check_budget(p, k)
    N = p.size
    sched = MwSchedule.for_size(max(N, 1), eps)
    rows = np.zeros((sched.T, N), dtype=bool)
    if N == 0 or k == 0 or k == N:
        rows[:] = k == N
        return rows
    lw_plus = np.zeros(N)
    lw_minus = np.zeros(N)
    a = sched.alpha
    idx = np.arange(N)
    neg_p = -p
    for i in range(sched.T):
        top = max(lw_plus.max(), lw_minus.max())
        key = np.exp(lw_plus - top) - np.exp(lw_minus - top)
        order = np.lexsort((idx, neg_p, -key))
        f = rows[i]
        f[order[:k]] = True
        r = f - p
        lw_plus -= a * r
        lw_minus += a * r
    return rows


def mw_deviation(rows: np.ndarray, p) -> float:
    return float(np.max(np.abs(rows.mean(axis=0) - np.asarray(p)))) if rows.size else 0.0


class BucketPlan:
    """Deterministic part of the bucketed sampler; ``sample`` adds the per-seed choices."""

    def __init__(self, p, k: int, eps: float):
        p = np.asarray(p, dtype=np.float64)
        k = _check_budget(p, k)
        self.size, self.k, self.eps = p.size, k, eps
        u = math.ceil(2 / eps)
        self.bucket = np.minimum((p * u).astype(np.int64), u - 1)
        s = np.bincount(self.bucket, weights=p, minlength=u)
        near = np.round(s)
        s = np.where(np.abs(s - near) < SUM_TOL * max(1, p.size), near, s)
        self.floors = np.floor(s).astype(np.int64)
        t = s - self.floors
        self.fractional = np.flatnonzero(t > 0)
        k_frac = k - int(self.floors.sum())
        if self.fractional.size:
            tf = t[self.fractional]
            tf = tf * (k_frac / tf.sum())  # absorb rounding noise so the MW budget is exact
            self.rows = mw_fixed_weight(tf, k_frac, eps / 2)
        else:
            self.rows = np.zeros((1, 0), dtype=bool)
        counts = np.bincount(self.bucket, minlength=u)
        self.starts = np.concatenate([[0], np.cumsum(counts)[:-1]])

    def sample(self, gen: np.random.Generator) -> np.ndarray:
        shat = self.floors.copy()
        row = self.rows[gen.integers(len(self.rows))]
        shat[self.fractional] += row
        keys = gen.random(self.size)
        order = np.lexsort((keys, self.bucket))
        rank = np.arange(self.size) - self.starts[self.bucket[order]]
        f = np.zeros(self.size, dtype=bool)
        f[order] = rank < shat[self.bucket[order]]
        return f


def bucketed_fixed_weight(p, k: int, eps: float, seed, label=("bucketed",)) -> np.ndarray:
    """One weight-k sample with per-coordinate marginals within eps of p over seeds."""
    return BucketPlan(p, k, eps).sample(as_oracle(seed).generator(label))


def exact_marginal_distribution(p, k: int, tol: float = 1e-6) -> list:
    """Distribution over weight-k vectors with marginals exactly p (test oracle, N <= 12).

    Repeatedly peel the weight-k vertex on the largest remaining marginals with
    the largest coefficient that keeps the remainder feasible.
    """
    p = np.asarray(p, dtype=np.float64)
    N = p.size
    if N > 12:
        raise ValueError("exact marginal oracle is limited to N <= 12")
    k = _check_budget(p, k)
    q = p.copy()
    mass = 1.0
    atoms = []
    for _ in range(N * N + 1):
        if mass <= tol:
            break
        f = greedy_topk(q, k)
        inside = q[f].min() if k else mass
        outside = mass - q[~f].max() if k < N else mass
        lam = min(inside, outside, mass)
        if lam <= 0:
            raise RuntimeError("decomposition stalled")
        atoms.append((lam, f.astype(np.int64)))
        q = q - lam * f
        q[np.abs(q) < 1e-15] = 0.0
        mass -= lam
    marg = sum(w * f for w, f in atoms)
    if np.max(np.abs(marg - p)) > tol or abs(sum(w for w, _ in atoms) - 1) > tol:
        raise RuntimeError("decomposition failed to reproduce the marginals")
    return atoms


# --- budget tree ------------------------------------------------------------

@dataclass(frozen=True)
class BudgetTree:
    N: int
    n: int
    depth: int  # leaf depth n'
    m: int
    k_root: int
    eps: float
    C: float = 16.0

    @staticmethod
    def build(N: int, k: int, eps: float, C: float = 16.0) -> "BudgetTree":
        if not 0 <= k <= N:
            raise ValueError("budget outside [0, N]")
        n = max(1, math.ceil(math.log2(N))) if N > 1 else 1
        depth = 0
        while (N >> (depth + 1)) >= 8 / eps:
            depth += 1
        return BudgetTree(N, n, depth, math.ceil(C * n * n / eps**2), k, eps, C)

    def split(self, lo: int, hi: int) -> int:
        return lo + (hi - lo) // 2

    def leaves(self) -> list:
        out = [(0, self.N)]
        for _ in range(self.depth):
            out = [c for lo, hi in out for c in ((lo, self.split(lo, hi)), (self.split(lo, hi), hi))]
        return out


def split_budget(node, k_z: int, p: Callable, tree: BudgetTree, oracle,
                 namespace: tuple = (), exact: bool = False,
                 range_values: Optional[Callable] = None) -> tuple:
    """Divide a node's budget between its two halves using an m-sample estimate.

    ``node`` is ``(depth, lo, hi)``. ``range_values(lo, hi)`` may supply cached p values.
    """
    depth, lo, hi = node
    mid = tree.split(lo, hi)
    size0 = mid - lo
    values = range_values or (lambda a, b: np.asarray(p(np.arange(a, b, dtype=np.int64))))
    if exact:
        ell = float(values(lo, mid).sum())
    else:
        gen = oracle.generator(("split", *namespace, depth, lo))
        if size0 <= tree.m:
            # multinomial counts of m uniform draws: same law, cost O(|X_z0|)
            counts = gen.multinomial(tree.m, np.full(size0, 1.0 / size0))
            ell = size0 / tree.m * float(counts @ values(lo, mid))
        else:
            xs = lo + gen.integers(0, size0, tree.m)
            ell = size0 / tree.m * float(np.sum(p(xs)))
    return clamp_split(ell, k_z, size0, hi - mid)


def clamp_split(ell: float, k_z: int, size0: int, size1: int) -> tuple:
    """k0 = floor(ell), pushed back into range so both halves can hold their share."""
    k0 = math.floor(ell + SUM_TOL)
    if k_z - k0 < 0:
        k0 = k_z
    elif k_z - k0 > size1:
        k0 = k_z - size1
    k0 = min(max(k0, 0), size0)
    return k0, k_z - k0


def adjust_leaf_predictor(p, k_z: int) -> np.ndarray:
    """Shift p on a leaf so it sums to k_z: fill slack upward or scale down."""
    p = np.asarray(p, dtype=np.float64)
    size = p.size
    if not 0 <= k_z <= size:
        raise ValueError("leaf budget outside [0, |X_z|]")
    S = float(p.sum())
    if k_z >= S:
        slack = size - S
        out = p + (k_z - S) * (1 - p) / slack if slack > 0 else p.copy()
    else:
        out = p * (k_z / S)
    return np.clip(out, 0.0, 1.0)


class FixedWeightSampler:
    """Lazily evaluated weight-k function over ``[0, N)`` driven by an oracle."""

    def __init__(self, pfun: Callable, N: int, k: int, eps: float, C: float = 16.0,
                 exact_split: bool = False, namespace: tuple = (), plan_cache: Optional[dict] = None,
                 plan_key=None):
        self.pfun = pfun
        self.tree = BudgetTree.build(N, k, eps, C)
        self.k, self.eps = k, eps
        self.exact_split = exact_split
        self.namespace = tuple(namespace)
        self._pcache: dict = {}
        self._plans = plan_cache if plan_cache is not None else {}
        # samplers whose predictor values coincide may pass a shared cache and key
        self.plan_key = plan_key if plan_key is not None else self.namespace

    def pvals(self, lo: int, hi: int) -> np.ndarray:
        key = (lo, hi)
        v = self._pcache.get(key)
        if v is None:
            v = self._pcache[key] = np.asarray(self.pfun(np.arange(lo, hi, dtype=np.int64)),
                                               dtype=np.float64)
        return v

    def children(self, oracle, node, k_z):
        key = ("fw-split", self.namespace, node[0], node[1])
        hit = oracle.cache.get(key)
        if hit is None:
            hit = oracle.cache[key] = split_budget(node, k_z, self.pfun, self.tree, oracle,
                                                   self.namespace, self.exact_split, self.pvals)
        return hit

    def leaf_of(self, oracle, x: int):
        lo, hi, k = 0, self.tree.N, self.k
        for depth in range(self.tree.depth):
            k0, k1 = self.children(oracle, (depth, lo, hi), k)
            mid = self.tree.split(lo, hi)
            if x < mid:
                hi, k = mid, k0
            else:
                lo, k = mid, k1
        return lo, hi, k

    def all_leaves(self, oracle) -> list:
        frontier = [(0, self.tree.N, self.k)]
        for depth in range(self.tree.depth):
            nxt = []
            for lo, hi, k in frontier:
                k0, k1 = self.children(oracle, (depth, lo, hi), k)
                mid = self.tree.split(lo, hi)
                nxt += [(lo, mid, k0), (mid, hi, k1)]
            frontier = nxt
        return frontier

    def plan(self, lo: int, hi: int, k: int) -> BucketPlan:
        key = (self.plan_key, lo, hi, k)
        plan = self._plans.get(key)
        if plan is None:
            p_adj = adjust_leaf_predictor(self.pvals(lo, hi), k)
            plan = self._plans[key] = BucketPlan(p_adj, k, self.eps / 2)
        return plan

    def leaf_table(self, oracle, lo: int, hi: int, k: int) -> np.ndarray:
        key = ("fw-leaf", self.namespace, lo)
        table = oracle.cache.get(key)
        if table is None:
            gen = oracle.generator(("leaf", *self.namespace, self.tree.depth, lo))
            table = oracle.cache[key] = self.plan(lo, hi, k).sample(gen)
        return table

    def value(self, oracle, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.int64)
        out = np.empty(xs.shape, dtype=np.int64)
        for i, x in enumerate(xs.tolist()):
            lo, hi, k = self.leaf_of(oracle, x)
            out.flat[i] = self.leaf_table(oracle, lo, hi, k)[x - lo]
        return out

    def materialize(self, oracle) -> np.ndarray:
        if self.tree.N > TABLE_CUTOFF:
            raise ValueError("domain too large to materialize")
        return np.concatenate([self.leaf_table(oracle, lo, hi, k).astype(np.int64)
                               for lo, hi, k in self.all_leaves(oracle)])

    def descriptor(self) -> dict:
        t = self.tree
        return {"k": self.k, "eps": self.eps, "leaf_depth": t.depth, "m": t.m, "C": t.C,
                "exact_split": self.exact_split, "scheme_version": SCHEME_VERSION}


def fixed_weight_impl(p, k: int, eps: float, C: float = 16.0,
                      exact_split: bool = False) -> ImplementationHandle:
    """Sample view of a model whose every object has exactly k ones."""
    domain = p.domain
    sampler = FixedWeightSampler(p, domain.cardinality, k, eps, C, exact_split)
    return _sampler_handle(sampler, domain, {"model": "fixed-weight", "predictor": p,
                                             **sampler.descriptor()})


def _sampler_handle(sampler: FixedWeightSampler, domain: DomainSpec, desc: dict):
    card = domain.cardinality
    pairN = domain.inner.cardinality if domain.kind == "pairs" else None

    def answer(oracle, rng, size):
        x = rng.integers(0, card, size)
        batch = {"x": x, "y": sampler.value(oracle, x)}
        return add_pair_fields(batch, pairN) if pairN else batch

    handle = ImplementationHandle(answer, "sample", desc, function=sampler.value, domain=domain)
    handle.sampler = sampler
    return handle


def learn_fixed_weight(target, k: int, auditor, dclass, params: AuditorParams,
                       rng: np.random.Generator, C: float = 16.0,
                       trace: Optional[LearnerTrace] = None, max_updates: Optional[int] = None,
                       domain: Optional[DomainSpec] = None) -> ImplementationHandle:
    """Learn p to eps/4 against the class plus the constant test, then sample at eps/2."""
    p = learn_weighted_predictor(target, k, auditor, dclass, params, rng, trace, max_updates, domain)
    return fixed_weight_impl(p, k, params.eps / 2, C)


def learn_weighted_predictor(target, k: int, auditor, dclass, params: AuditorParams, rng,
                             trace=None, max_updates=None, domain=None, total=None) -> CappedPredictor:
    """Multiaccurate predictor at eps/4 for a target with k ones per ``total`` points."""
    domain = domain or target.source.domain
    total = total or domain.cardinality
    eps = params.eps
    inner_gamma = params.gamma if params.gamma < eps / 4 else eps / 8
    inner = AuditorParams(eps / 4, inner_gamma, params.delta, params.sample_budget)
    augmented = list(dclass) + [Distinguisher("set", domain, S=Whole(), name="const1")]
    return learn_multiaccurate(target, auditor, augmented, inner, rng, base=k / total,
                               domain=domain, trace=trace, max_updates=max_updates)
