"""Learning a dense binary function from support samples, and the rejection-sampling model."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .auditors import AuditorParams, audit_support_access
from .multiaccuracy import CappedPredictor, LearnerTrace, NonConvergenceError
from .objects import TABLE_CUTOFF, DomainSpec, ImplementationHandle, add_pair_fields
from .sets import Whole

MIN_DENSITY = 2.0 ** -10
BUDGET_CONSTANT = 40


class SamplingFailure(RuntimeError):
    pass


class TabledPredictor:
    """Table-backed mirror of a CappedPredictor, updated term by term."""

    def __init__(self, predictor: CappedPredictor):
        self.predictor = predictor
        self.domain = predictor.domain
        self.values = predictor.table()

    def __call__(self, xs) -> np.ndarray:
        return self.values[np.asarray(xs, dtype=np.int64)]

    def add(self, test, weight: float) -> None:
        self.predictor.add(test, weight)
        member = self.predictor.terms[-1][0]
        g = member.contains(np.arange(self.values.size, dtype=np.int64))
        self.values[g] = np.clip(self.values[g] + weight, 0.0, 1.0)

    def mean(self) -> float:
        return float(self.values.mean())


@dataclass
class SupportLearnerState:
    predictor: CappedPredictor
    alpha: float
    beta: float
    budget: int
    update_count: int = 0
    calibration_count: int = 0
    trace: LearnerTrace = field(default_factory=LearnerTrace)
    view: object = None  # what the auditor evaluates; a TabledPredictor when the table fits

    @staticmethod
    def start(domain: DomainSpec, alpha: float, gamma: float, C: float = BUDGET_CONSTANT,
              beta_scale: float = 0.1) -> "SupportLearnerState":
        if not 0 < alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if alpha < MIN_DENSITY:
            raise ValueError(f"alpha={alpha} below {MIN_DENSITY}: support boosting needs a dense target")
        p = CappedPredictor(alpha, domain)
        budget = math.ceil(C / (gamma**2 * alpha**4))
        state = SupportLearnerState(p, alpha, beta_scale * gamma * alpha**2, budget)
        state.view = TabledPredictor(p) if domain.cardinality <= TABLE_CUTOFF else p
        return state

    def add(self, test, weight: float) -> None:
        if self.update_count + self.calibration_count >= self.budget:
            raise NonConvergenceError(f"support learner exceeded {self.budget} updates")
        if isinstance(self.view, TabledPredictor):
            self.view.add(test, weight)
        else:
            self.predictor.add(test, weight)

    def mean(self, rng, samples: int) -> float:
        card = self.predictor.domain.cardinality
        if isinstance(self.view, TabledPredictor) and card <= samples:
            return self.view.mean()
        return float(self.view(rng.integers(0, card, samples)).mean())


def calibration_samples(beta: float, budget: int, delta: float) -> int:
    """Hoeffding count for accuracy beta/100 with failure delta/budget."""
    return math.ceil(math.log(2 * budget / delta) / (2 * (beta / 100) ** 2))


def calibrate_mass(state: SupportLearnerState, alpha: float, rng: np.random.Generator,
                   delta: float = 0.05, exact: Optional[bool] = None) -> SupportLearnerState:
    """Nudge the whole domain by +-beta until the estimated mean is within beta of alpha.

    The mean is exact when the domain is no larger than the Hoeffding count
    (or ``exact`` forces it); otherwise it is a uniform-sample estimate.
    """
    n = calibration_samples(state.beta, state.budget, delta)
    card = state.predictor.domain.cardinality
    if exact:
        n = max(n, card)
    max_rounds = math.ceil(10 / state.beta**2)
    for _ in range(max_rounds):
        est = state.mean(rng, n)
        if abs(est - alpha) <= state.beta:
            return state
        step = state.beta if alpha > est else -state.beta
        state.add(Whole(), step)
        state.calibration_count += 1
        state.trace.calibrations.append({"estimate": est, "step": step})
    raise NonConvergenceError("mass calibration did not settle within its round cap")


def learn_support_access(target, alpha: float, auditor, set_class, params: AuditorParams,
                         rng: np.random.Generator, C: float = BUDGET_CONSTANT,
                         domain: Optional[DomainSpec] = None, max_updates: Optional[int] = None,
                         trace: Optional[LearnerTrace] = None, on_update=None,
                         state: Optional[SupportLearnerState] = None) -> CappedPredictor:
    """Alternate calibration and support-law audits; each finding on S adds b*gamma*alpha*|X|/|S| on S.

    ``auditor`` has the signature of ``audit_support_access``.
    ``on_update(kind, before_table, after_table, finding)`` receives exact tables
    when the domain is tabulated.
    """
    domain = domain or target.source.domain
    if state is None:
        state = SupportLearnerState.start(domain, alpha, params.gamma, C)
    if trace is not None:
        state.trace = trace
    if max_updates is not None:
        state.budget = max_updates
    card = domain.cardinality
    set_class = list(set_class)
    sizes = {}
    gamma = params.gamma
    while True:
        before = _snapshot(state, on_update)
        n_cal = state.calibration_count
        calibrate_mass(state, alpha, rng, params.delta)
        if on_update and state.calibration_count > n_cal:
            on_update("calibration", before, _snapshot(state, on_update), None)
        finding = auditor(set_class, target, state.view, params, rng, cardinality=card)
        state.trace.audits += 1
        if finding is None:
            return state.predictor
        S = finding.test.member
        key = finding.distinguisher.name
        if key not in sizes:
            sizes[key] = S.size(card)
        before = _snapshot(state, on_update)
        state.add(S, finding.sign * gamma * alpha * card / sizes[key])
        state.update_count += 1
        state.trace.updates.append(finding.summary())
        if on_update:
            on_update("audit", before, _snapshot(state, on_update), finding)


def _snapshot(state, on_update):
    if not on_update or not isinstance(state.view, TabledPredictor):
        return None
    return state.view.values.copy()


def rejection_rounds(alpha: float, delta_fail: float) -> int:
    return math.ceil((10 / alpha) * math.log(1 / delta_fail))


def rejection_sampler_impl(p, max_rounds: int) -> ImplementationHandle:
    """Support view of f(x) = [accept bit of x], sampled by uniform proposals.

    The accept bit is keyed by x alone, so under one oracle every round and
    query sees the same function. Batches carry a ``rounds`` field.
    """
    domain = p.domain
    card = domain.cardinality
    pairN = domain.inner.cardinality if domain.kind == "pairs" else None
    desc = {"model": "rejection-support", "predictor": p, "max_rounds": max_rounds}
    if isinstance(p, CappedPredictor) and card <= TABLE_CUTOFF:
        p = TabledPredictor(p)

    def function(oracle, xs):
        xs = np.asarray(xs, dtype=np.int64)
        return (oracle.uniform_many("acc", (), xs) < p(xs)).astype(np.int64)

    def answer(oracle, rng, size):
        out = np.empty(size, dtype=np.int64)
        rounds = np.zeros(size, dtype=np.int64)
        pending = np.arange(size)
        for _ in range(max_rounds):
            xs = rng.integers(0, card, pending.size)
            acc = function(oracle, xs) == 1
            rounds[pending] += 1
            out[pending[acc]] = xs[acc]
            pending = pending[~acc]
            if pending.size == 0:
                break
        else:
            raise SamplingFailure(f"no accepted proposal within {max_rounds} rounds")
        batch = {"x": out, "rounds": rounds}
        return add_pair_fields(batch, pairN) if pairN else batch

    return ImplementationHandle(answer, "support", desc, function=function, domain=domain)
