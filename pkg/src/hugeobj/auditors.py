"""Finite-class sampling auditors and the statistical-query conversion for support access."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .distinguishers import Distinguisher, SignedTest, to_signed_test
from .objects import TABLE_CUTOFF


@dataclass
class AuditorParams:
    eps: float
    gamma: float
    delta: float
    sample_budget: Optional[int] = None

    def __post_init__(self):
        if not 0 < self.gamma <= self.eps < 1:
            raise ValueError("need 0 < gamma <= eps < 1")
        if not 0 < self.delta < 1:
            raise ValueError("need 0 < delta < 1")

    def sample_count(self, t: int) -> int:
        """k = ceil(8 ln(4t/delta) / (eps - gamma)^2) unless overridden."""
        if self.sample_budget is not None:
            return int(self.sample_budget)
        if self.eps == self.gamma:
            raise ValueError("eps == gamma needs an explicit sample_budget")
        return math.ceil(8 * math.log(4 * t / self.delta) / (self.eps - self.gamma) ** 2)

    @property
    def threshold(self) -> float:
        return (self.eps + self.gamma) / 2


@dataclass
class AuditFinding:
    distinguisher: Distinguisher
    sign: int
    estimated_advantage: float
    test: SignedTest

    @property
    def coordinate(self) -> Optional[int]:
        return self.test.coordinate

    def summary(self) -> dict:
        return {"name": self.distinguisher.name, "sign": self.sign,
                "estimated_advantage": self.estimated_advantage}


def _point_and_label(D: Distinguisher, batch: dict):
    """The point a test reads and the 0/1 statistic the predictor should match."""
    if D.kind == "coord_set":
        point, bits = ("x", "y") if "y" in batch else ("u", "v")
        return batch[point], (batch[bits] >> D.j) & 1
    return batch["x"], batch["y"]


def _predict(predictor, D: Distinguisher, xs, memo: dict):
    key = D.j if D.kind == "coord_set" else None
    if key not in memo:
        memo[key] = predictor.coordinate(key)(xs) if key is not None else predictor(xs)
    return memo[key]


def audit_sample_access(dclass, target, predictor, params: AuditorParams,
                        rng: np.random.Generator) -> Optional[AuditFinding]:
    """Estimate E[(f*(x) - p(x)) g_D(x)] for every D and return the largest violation."""
    dclass = list(dclass)
    if not dclass:
        return None
    k = params.sample_count(len(dclass))
    batch = target.draw(k, rng)
    memo: dict = {}
    best, best_v = None, 0.0
    for D in dclass:
        xs, label = _point_and_label(D, batch)
        pv = _predict(predictor, D, xs, memo)
        g = D.membership().contains(xs)
        v = float(np.sum((label - pv)[g]) / k)
        if abs(v) > abs(best_v) or best is None:
            best, best_v = D, v
    if abs(best_v) > params.threshold:
        return AuditFinding(best, 1 if best_v > 0 else -1, abs(best_v), to_signed_test(best))
    return None


class DegeneratePredictorError(ValueError):
    pass


def rejection_draws(predictor, cardinality: int, count: int, rng: np.random.Generator,
                    max_chunks: int = 200) -> np.ndarray:
    """``count`` independent draws from the law p(x) / sum(p) by rejection."""
    out = []
    have = 0
    chunk = max(4 * count, 1024)
    for _ in range(max_chunks):
        xs = rng.integers(0, cardinality, chunk)
        keep = xs[rng.random(chunk) < predictor(xs)]
        out.append(keep)
        have += keep.size
        if have >= count:
            return np.concatenate(out)[:count]
        if have == 0 and cardinality <= TABLE_CUTOFF:
            if float(predictor(np.arange(cardinality)).sum()) == 0.0:
                raise DegeneratePredictorError("predictor has zero total mass")
    raise DegeneratePredictorError("rejection sampling failed to collect enough draws")


def audit_support_access(set_class, target, predictor, params: AuditorParams,
                         rng: np.random.Generator, cardinality: Optional[int] = None
                         ) -> Optional[AuditFinding]:
    """Compare Pr_{x ~ supp f*}[x in S] with Pr_{x ~ p}[x in S] on every set."""
    set_class = list(set_class)
    if not set_class:
        return None
    k = params.sample_count(len(set_class))
    card = cardinality or predictor.domain.cardinality
    tx = target.draw(k, rng)["x"]
    mx = rejection_draws(predictor, card, k, rng)
    best, best_v = None, 0.0
    for D in set_class:
        S = D.membership()
        v = float(S.contains(tx).mean() - S.contains(mx).mean())
        if abs(v) > abs(best_v) or best is None:
            best, best_v = D, v
    if abs(best_v) > params.threshold:
        S = best.membership()
        return AuditFinding(best, 1 if best_v > 0 else -1, abs(best_v), SignedTest(S, member=S))
    return None


def sq_support_oracle(phi1, phi2, support_view, m: int, eps: float,
                      rng: np.random.Generator, cardinality: Optional[int] = None) -> float:
    """Answer E_x[phi(x, f*(x))] for phi(x, y) = phi1(x) y + phi2(x)(1 - y) from support draws.

    E[phi] = E_x[phi2] + (m/|X|) E_{x ~ supp}[phi1 - phi2]; both terms are estimated to
    eps/2 with failure probability |X|^-2 each (Hoeffding).
    """
    card = cardinality or support_view.source.domain.cardinality
    if not 0 <= m <= card:
        raise ValueError("support size must lie in [0, |X|]")
    log_term = math.log(2.0 * card * card)
    n1 = math.ceil(2 * log_term / eps**2)
    xs = rng.integers(0, card, n1)
    v1 = float(np.mean(phi2(xs)))
    if m == 0:
        return v1
    n2 = math.ceil(8 * log_term / eps**2)
    sx = support_view.draw(n2, rng)["x"]
    v2 = float(np.mean(phi1(sx) - phi2(sx)))
    return v1 + (m / card) * v2
