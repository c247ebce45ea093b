"""Graph learners: dense wrappers over function learners, and the sparse-to-dense reduction.

Adjacency convention: a graph on N vertices is the function (u, v) -> [edge] on
the N*N ordered pairs, loops included. Undirected graphs store both (u, v)
and (v, u). Densities count ordered pairs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .auditors import AuditorParams, audit_support_access
from .fixed_weight import FixedWeightSampler, fixed_weight_impl, learn_weighted_predictor
from .multiaccuracy import NonConvergenceError, bernoulli_model_impl, learn_multiaccurate
from .objects import TABLE_CUTOFF, DomainSpec, ImplementationHandle, add_pair_fields
from .support_boost import (TabledPredictor, learn_support_access, rejection_rounds,
                            rejection_sampler_impl)

EXACT_UNIFORMITY_CUTOFF = 12


def pair_domain(target) -> DomainSpec:
    return DomainSpec.pairs(target.source.vertices)


def learn_dense_graph(target, cut_class, auditor, params: AuditorParams, rng: np.random.Generator,
                      trace=None, max_updates=None) -> ImplementationHandle:
    """Multiaccuracy over the pair domain with cut indicators as tests."""
    p = learn_multiaccurate(target, auditor, cut_class, params, rng, base=0.5,
                            domain=pair_domain(target), trace=trace, max_updates=max_updates)
    return bernoulli_model_impl(p)


def learn_fixed_edges(target, m_edges: int, cut_class, auditor, params: AuditorParams,
                      rng: np.random.Generator, C: float = 16.0, trace=None) -> ImplementationHandle:
    """Every sampled graph has exactly ``m_edges`` ordered edges."""
    domain = pair_domain(target)
    if not 0 <= m_edges <= domain.cardinality:
        raise ValueError("edge budget outside [0, N^2]")
    p = learn_weighted_predictor(target, m_edges, auditor, cut_class, params, rng, trace,
                                 domain=domain)
    return fixed_weight_impl(p, m_edges, params.eps / 2, C)


class RowSamplers:
    """One weight-d sampler per row u, keyed by ("row", u); rows with equal p share MW plans."""

    def __init__(self, p, N: int, d: int, eps: float, C: float = 16.0):
        self.N, self.d, self.eps, self.C = N, d, eps, C
        self.p = TabledPredictor(p) if N * N <= TABLE_CUTOFF and hasattr(p, "terms") else p
        self._rows: dict = {}
        self._plans: dict = {}

    def row(self, u: int) -> FixedWeightSampler:
        s = self._rows.get(u)
        if s is None:
            base = u * self.N
            values = np.asarray(self.p(base + np.arange(self.N, dtype=np.int64)), dtype=np.float64)
            s = FixedWeightSampler(lambda vs, base=base: self.p(base + np.asarray(vs)), self.N,
                                   self.d, self.eps, self.C, namespace=("row", u),
                                   plan_cache=self._plans, plan_key=values.tobytes())
            s._pcache[(0, self.N)] = values
            self._rows[u] = s
        return s

    def value(self, oracle, xs) -> np.ndarray:
        us, vs = np.divmod(np.asarray(xs, dtype=np.int64), self.N)
        out = np.empty(us.shape, dtype=np.int64)
        for u in np.unique(us).tolist():
            sel = us == u
            out[sel] = self.row(u).value(oracle, vs[sel])
        return out

    def adjacency(self, oracle) -> np.ndarray:
        return np.stack([self.row(u).materialize(oracle) for u in range(self.N)])


def learn_fixed_outdegree_dense(target, d: int, cut_class, auditor, params: AuditorParams,
                                rng: np.random.Generator, C: float = 16.0,
                                trace=None) -> ImplementationHandle:
    """Every vertex of every sampled graph has out-degree exactly d."""
    domain = pair_domain(target)
    N = domain.inner.cardinality
    if not 0 <= d <= N:
        raise ValueError("out-degree outside [0, N]")
    p = learn_weighted_predictor(target, d, auditor, cut_class, params, rng, trace,
                                 domain=domain, total=N)
    rows = RowSamplers(p, N, d, params.eps / 2, C)

    def answer(oracle, rng, size):
        x = rng.integers(0, N * N, size)
        return add_pair_fields({"x": x, "y": rows.value(oracle, x)}, N)

    handle = ImplementationHandle(answer, "sample",
                                  {"model": "fixed-out-degree", "predictor": p, "d": d,
                                   "eps": params.eps / 2},
                                  function=rows.value, domain=domain)
    handle.rows = rows
    return handle


@dataclass
class SparseReductionParams:
    gamma: float  # density ratio bound; the dense model has density 1/gamma
    eta: float
    eps: float
    eps_prime: float
    delta: float = 0.05
    delta_prime: Optional[float] = None
    max_rounds_fail: float = 1e-9

    def __post_init__(self):
        if self.gamma <= 1:
            raise ValueError("gamma must exceed 1")
        if not 0 < self.eps_prime <= self.eps:
            raise ValueError("need 0 < eps' <= eps")
        if self.delta_prime is None:
            self.delta_prime = self.eps_prime**2 / (100 * self.gamma)

    @property
    def alpha(self) -> float:
        return 1.0 / self.gamma

    def auditor_params(self) -> AuditorParams:
        return AuditorParams(self.eps, self.eps_prime, self.delta)


class NoDenseModelError(NonConvergenceError):
    """The support learner gave up; the target likely has a dense subgraph."""


def learn_sparse_dense_model(target, params: SparseReductionParams, cut_class,
                             auditor=audit_support_access, rng: Optional[np.random.Generator] = None,
                             max_updates=None, trace=None) -> ImplementationHandle:
    """Dense model of density 1/gamma whose normalized edge law matches the sparse target on cuts.

    Audits read the sparse target's support view unchanged.
    """
    rng = rng if rng is not None else np.random.default_rng()
    domain = pair_domain(target)
    try:
        p = learn_support_access(target, params.alpha, auditor, cut_class, params.auditor_params(),
                                 rng, domain=domain, max_updates=max_updates, trace=trace)
    except NonConvergenceError as exc:
        raise NoDenseModelError(f"{exc}; evidence against upper-uniformity, "
                                "try no_dense_model_witness on the worst cut") from exc
    return rejection_sampler_impl(p, rejection_rounds(params.alpha, params.max_rounds_fail))


# --- diagnostics ------------------------------------------------------------

def _adjacency(graph) -> np.ndarray:
    return graph if isinstance(graph, np.ndarray) else graph.adjacency()


@dataclass
class UniformityVerdict:
    holds: bool
    worst_score: float  # max over pairs of lhs / rhs of the clause that applies
    worst_ratio: float  # max rho(U, V) / rho_G over large pairs
    witness: Optional[tuple] = None  # (U, V) index arrays of the worst pair
    clause: str = ""
    pairs_checked: int = 0

    def to_dict(self) -> dict:
        d = {"holds": self.holds, "worst_score": self.worst_score, "worst_ratio": self.worst_ratio,
             "clause": self.clause, "pairs_checked": self.pairs_checked}
        if self.witness is not None:
            d["witness"] = [self.witness[0].tolist(), self.witness[1].tolist()]
        return d


def _score_pairs(A, Um, Vm, eta, gamma, total):
    """Per pair: (score, density ratio or nan, is_large). Masks are (M, N) booleans."""
    N = A.shape[0]
    E = np.einsum("mi,ij,mj->m", Um.astype(np.float64), A, Vm.astype(np.float64))
    su, sv = Um.sum(1), Vm.sum(1)
    large = np.minimum(su, sv) >= eta * N
    rho_g = total / (N * N)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(su * sv > 0, E / np.maximum(su * sv, 1) / rho_g, 0.0) if total else np.zeros_like(E)
        small_rhs = gamma * eta * total
        score = np.where(large, ratio / gamma, E / small_rhs if total else 0.0)
    return score, np.where(large, ratio, np.nan), large


def upper_uniform_check(graph, eta: float, gamma: float, mode: str = "exact", trials: int = 2000,
                        rng: Optional[np.random.Generator] = None) -> UniformityVerdict:
    """Check both upper-uniformity clauses over disjoint vertex-set pairs.

    ``exact`` enumerates every assignment of vertices to (U, V, neither);
    ``sampled`` tries random pairs and neighborhood splits, so a pass there is
    only evidence.
    """
    A = _adjacency(graph).astype(np.float64)
    N = A.shape[0]
    total = float(A.sum())
    if mode == "exact":
        if N > EXACT_UNIFORMITY_CUTOFF:
            raise ValueError(f"exact mode needs N <= {EXACT_UNIFORMITY_CUTOFF}")
        chunks = _assignment_chunks(N)
    elif mode == "sampled":
        chunks = [_sampled_pairs(A, eta, trials, rng if rng is not None else np.random.default_rng(0))]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    best = UniformityVerdict(True, 0.0, 0.0)
    count = 0
    for Um, Vm in chunks:
        keep = Um.any(1) & Vm.any(1)
        Um, Vm = Um[keep], Vm[keep]
        count += len(Um)
        if total == 0 or not len(Um):
            continue
        score, ratio, large = _score_pairs(A, Um, Vm, eta, gamma, total)
        i = int(np.argmax(score))
        if score[i] > best.worst_score:
            best.worst_score = float(score[i])
            best.witness = (np.flatnonzero(Um[i]), np.flatnonzero(Vm[i]))
            best.clause = "large" if large[i] else "small"
        if large.any():
            best.worst_ratio = max(best.worst_ratio, float(np.nanmax(ratio)))
    best.pairs_checked = count
    best.holds = best.worst_score <= 1.0 + 1e-12
    return best


def _assignment_chunks(N: int, chunk: int = 1 << 16):
    codes = np.arange(3**N, dtype=np.int64)
    for lo in range(0, codes.size, chunk):
        c = codes[lo:lo + chunk]
        digits = (c[:, None] // (3 ** np.arange(N))[None, :]) % 3
        yield digits == 1, digits == 2


def _sampled_pairs(A, eta, trials, rng):
    """Random disjoint pairs at a few sizes plus splits of dense neighborhoods."""
    N = A.shape[0]
    Us, Vs = [], []
    sizes = sorted({max(1, math.ceil(eta * N)), max(1, N // 8), max(1, N // 4), max(1, N // 2)})
    for t in range(trials):
        s = sizes[t % len(sizes)]
        perm = rng.permutation(N)
        s = min(s, N // 2) or 1
        u = np.zeros(N, bool); u[perm[:s]] = True
        v = np.zeros(N, bool); v[perm[s:2 * s]] = True
        Us.append(u); Vs.append(v)
    deg = A.sum(1) + A.sum(0)
    for w in np.argsort(-deg, kind="stable")[: min(N, max(16, trials // 10))]:
        nb = np.flatnonzero((A[w] + A[:, w]) > 0)
        nb = np.union1d(nb, [w])
        # keep the neighbors best connected inside the neighborhood, then split them
        inner = (A[np.ix_(nb, nb)] + A[np.ix_(nb, nb)].T).sum(1)
        core = nb[np.argsort(-inner, kind="stable")[: max(2, int(np.sum(inner >= np.median(inner))))]]
        floor = max(1, math.ceil(eta * N))
        for _ in range(4):
            perm = rng.permutation(core)
            h = perm.size // 2
            u = np.zeros(N, bool); u[perm[:h]] = True
            v = np.zeros(N, bool); v[perm[h:]] = True
            # halves below eta*N only face the lenient small-set clause; pad them up
            rest = rng.permutation(np.flatnonzero(~(u | v)))
            need_u = max(0, floor - int(u.sum()))
            need_v = max(0, floor - int(v.sum()))
            u[rest[:need_u]] = True
            v[rest[need_u:need_u + need_v]] = True
            Us.append(u); Vs.append(v)
    return np.array(Us), np.array(Vs)


def no_dense_model_witness(graph, U, V, gamma: float, delta: float, eps: float) -> bool:
    """True iff rho(U, V) / rho_G > gamma + 2 delta / eps^2, ruling out every density-1/gamma model."""
    A = _adjacency(graph).astype(np.float64)
    N = A.shape[0]
    U, V = np.asarray(U), np.asarray(V)
    if min(U.size, V.size) < eps * N - 1e-9:
        raise ValueError("both sets need at least eps*N vertices")
    total = A.sum()
    if total == 0:
        raise ValueError("density ratio undefined for an edgeless graph")
    ratio = (A[np.ix_(U, V)].sum() / (U.size * V.size)) / (total / (N * N))
    return bool(ratio > gamma + 2 * delta / eps**2)


def best_dense_gap(graph, U, V, gamma: float) -> float:
    """Smallest cut-law gap over graphs with N^2/gamma ordered edges (brute-force reference).

    Any allocation puts between max(0, E_H - (N^2 - |U||V|)) and min(|U||V|, E_H)
    edges in U x V; the gap is minimized at the allocation closest to the target mass.
    """
    A = _adjacency(graph).astype(np.float64)
    N = A.shape[0]
    E_h = round(N * N / gamma)
    target = A[np.ix_(np.asarray(U), np.asarray(V))].sum() / A.sum()
    cells = len(U) * len(V)
    best = math.inf
    for inside in range(max(0, E_h - (N * N - cells)), min(cells, E_h) + 1):
        best = min(best, abs(target - inside / E_h))
    return best
