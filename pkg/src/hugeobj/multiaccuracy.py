"""Capped additive predictors, boosting to multiaccuracy, and the Bernoulli product model."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .distinguishers import SignedTest
from .objects import DomainSpec, ImplementationHandle, add_pair_fields
from .sets import MemberSet, set_from_dict


def cap(v):
    return np.clip(v, 0.0, 1.0)


def lcap(values) -> float:
    """Iterated capped sum: Lcap(v1..vt) = cap(Lcap(v1..v_{t-1}) + vt)."""
    acc = 0.0
    for i, v in enumerate(values):
        acc = min(1.0, max(0.0, v if i == 0 else acc + v))
    return acc


def _test_values(test, xs):
    if isinstance(test, MemberSet):
        return test.contains(xs)
    return test(xs)


@dataclass
class CappedPredictor:
    base: float
    domain: DomainSpec
    terms: list = field(default_factory=list)  # ordered (test, weight)

    def __call__(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.int64)
        v = np.full(xs.shape, min(1.0, max(0.0, self.base)))
        for test, w in self.terms:
            g = _test_values(test, xs)
            if g.dtype == bool:
                v[g] = np.clip(v[g] + w, 0.0, 1.0)
            else:
                v = cap(v + w * g)
        return v

    def add(self, test, weight: float) -> None:
        if isinstance(test, SignedTest) and test.member is not None:
            test = test.member
        self.terms.append((test, float(weight)))

    def copy(self) -> "CappedPredictor":
        return CappedPredictor(self.base, self.domain, list(self.terms))

    def table(self) -> np.ndarray:
        return self(np.arange(self.domain.cardinality, dtype=np.int64))

    def mean(self) -> float:
        return float(self.table().mean())

    def to_dict(self) -> dict:
        terms = []
        for test, w in self.terms:
            if not isinstance(test, MemberSet):
                raise ValueError("only set-indicator terms are serializable")
            terms.append({"set": test.to_dict(), "weight": w})
        return {"base": self.base, "domain": self.domain.to_dict(), "terms": terms}

    @staticmethod
    def from_dict(d: dict) -> "CappedPredictor":
        domain = DomainSpec.from_dict(d["domain"])
        return CappedPredictor(d["base"], domain,
                               [(set_from_dict(t["set"]), t["weight"]) for t in d["terms"]])


def eval_predictor(p: CappedPredictor, x):
    out = p(np.atleast_1d(x))
    return float(out[0]) if np.ndim(x) == 0 else out


def potential(p: CappedPredictor, target_table: np.ndarray) -> float:
    """Sum of squared errors against an exactly known target."""
    return float(np.sum((target_table - p.table()) ** 2))


class NonConvergenceError(RuntimeError):
    pass


@dataclass
class LearnerTrace:
    updates: list = field(default_factory=list)
    calibrations: list = field(default_factory=list)
    audits: int = 0

    def to_dict(self) -> dict:
        return {"updates": self.updates, "calibrations": self.calibrations, "audits": self.audits}


def learn_multiaccurate(target, auditor, dclass, params, rng: np.random.Generator,
                        base: float = 0.5, domain: Optional[DomainSpec] = None,
                        max_updates: Optional[int] = None, slack: int = 10,
                        trace: Optional[LearnerTrace] = None, on_update=None) -> CappedPredictor:
    """Boost until the auditor finds no violation, with one confirming audit.

    Each finding with sign b appends the term (test, b * gamma).
    ``on_update(before, after, finding)`` lets callers track exact potentials.
    """
    domain = domain or target.source.domain
    p = CappedPredictor(base, domain)
    dclass = list(dclass)
    if not dclass:
        return p
    gamma = params.gamma
    cap_updates = max_updates if max_updates is not None else math.ceil(4 / gamma**2) + slack
    trace = trace if trace is not None else LearnerTrace()
    confirmed = False
    while True:
        finding = auditor(dclass, target, p, params, rng)
        trace.audits += 1
        if finding is None:
            if confirmed:
                return p
            confirmed = True
            continue
        confirmed = False
        if len(trace.updates) >= cap_updates:
            raise NonConvergenceError(
                f"multiaccuracy exceeded {cap_updates} updates; auditor contract likely violated")
        before = p.copy() if on_update else None
        p.add(finding.test, finding.sign * gamma)
        trace.updates.append(finding.summary())
        if on_update:
            on_update(before, p, finding)


def bernoulli_model_impl(p: CappedPredictor) -> ImplementationHandle:
    """Per object, f(x) ~ Ber(p(x)) independently, decided by the oracle at label ("ber", x)."""
    domain = p.domain
    card = domain.cardinality
    pairN = domain.inner.cardinality if domain.kind == "pairs" else None

    def function(oracle, xs):
        return (oracle.uniform_many("ber", (), xs) < p(xs)).astype(np.int64)

    def answer(oracle, rng, size):
        x = rng.integers(0, card, size)
        batch = {"x": x, "y": function(oracle, x)}
        return add_pair_fields(batch, pairN) if pairN else batch

    desc = {"model": "bernoulli-product", "predictor": p}
    return ImplementationHandle(answer, "sample", desc, function=function, domain=domain)
