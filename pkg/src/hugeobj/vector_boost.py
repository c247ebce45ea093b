"""Per-coordinate boosting for multi-bit outputs and out-degree-d graphs."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .auditors import AuditorParams
from .multiaccuracy import CappedPredictor, LearnerTrace, NonConvergenceError
from .objects import DomainSpec, ImplementationHandle, add_pair_fields

MAX_RETRIES = 64


@dataclass
class CoordinatePredictors:
    """One capped predictor per output bit; bit j of the answer is read as ``(y >> j) & 1``."""

    preds: list
    d: Optional[int] = None  # set in graph mode

    @staticmethod
    def start(domain: DomainSpec, n_out: int, base: float = 0.5) -> "CoordinatePredictors":
        return CoordinatePredictors([CappedPredictor(base, domain) for _ in range(n_out)])

    @property
    def n(self) -> int:
        return len(self.preds)

    @property
    def domain(self) -> DomainSpec:
        return self.preds[0].domain

    def coordinate(self, j: int) -> CappedPredictor:
        return self.preds[j]

    def tables(self) -> np.ndarray:
        return np.stack([p.table() for p in self.preds])

    def to_dict(self) -> dict:
        return {"n": self.n, "d": self.d, "predictors": [p.to_dict() for p in self.preds]}

    @staticmethod
    def from_dict(d: dict) -> "CoordinatePredictors":
        return CoordinatePredictors([CappedPredictor.from_dict(p) for p in d["predictors"]], d.get("d"))


def _boost(target, coord_class, auditor, params: AuditorParams, rng, n_out: int,
           domain: DomainSpec, slack: int, trace: Optional[LearnerTrace], on_update,
           max_updates: Optional[int]) -> CoordinatePredictors:
    preds = CoordinatePredictors.start(domain, n_out)
    coord_class = list(coord_class)
    if not coord_class:
        return preds
    gamma = params.gamma
    cap_updates = max_updates if max_updates is not None else math.ceil(n_out / gamma**2) + slack
    trace = trace if trace is not None else LearnerTrace()
    confirmed = False
    while True:
        finding = auditor(coord_class, target, preds, params, rng)
        trace.audits += 1
        if finding is None:
            if confirmed:
                return preds
            confirmed = True
            continue
        confirmed = False
        if len(trace.updates) >= cap_updates:
            raise NonConvergenceError(f"coordinate boosting exceeded {cap_updates} updates")
        j = finding.coordinate
        before = preds.preds[j].copy() if on_update else None
        preds.preds[j].add(finding.test, finding.sign * gamma)
        trace.updates.append(dict(finding.summary(), j=j))
        if on_update:
            on_update(j, before, preds.preds[j], finding)


def learn_bitstring(target, coord_class, auditor, params: AuditorParams, rng: np.random.Generator,
                    n_out: Optional[int] = None, slack: int = 10, trace=None, on_update=None,
                    max_updates=None) -> CoordinatePredictors:
    """Boost every output bit against (S, j) tests read from (x, f(x)) samples."""
    domain = target.source.domain
    n_out = n_out or target.source.range_bits
    return _boost(target, coord_class, auditor, params, rng, n_out, domain, slack, trace,
                  on_update, max_updates)


def learn_outdegree_d(target, d: int, coord_class, auditor, params: AuditorParams,
                      rng: np.random.Generator, n_out: Optional[int] = None, slack: int = 10,
                      trace=None, on_update=None, max_updates=None) -> CoordinatePredictors:
    """Same loop on uniform edges (u, v): the statistic is bit j of a random out-neighbor."""
    vertices = target.source.vertices
    n_out = n_out or vertices.n
    preds = _boost(target, coord_class, auditor, params, rng, n_out, vertices, slack, trace,
                   on_update, max_updates)
    preds.d = d
    return preds


def _draw_bits(oracle, preds: CoordinatePredictors, xs, context: str, prefix: tuple,
               suffix: tuple = ()) -> np.ndarray:
    """Bit j is the coin at label (context, x, *prefix, j, *suffix)."""
    v = np.zeros(xs.shape, dtype=np.int64)
    for j, p in enumerate(preds.preds):
        u = oracle.uniform_many(context, (), xs, prefix + (j,) + suffix)
        v |= (u < p(xs)).astype(np.int64) << j
    return v


def bitstring_impl(preds: CoordinatePredictors) -> ImplementationHandle:
    """Each output bit j of f(x) is an independent coin of bias p_j(x) at label ("bit", x, j)."""
    domain = preds.domain
    card = domain.cardinality

    def function(oracle, xs):
        return _draw_bits(oracle, preds, np.asarray(xs, dtype=np.int64), "bit", ())

    def answer(oracle, rng, size):
        x = rng.integers(0, card, size)
        return {"x": x, "y": function(oracle, x)}

    return ImplementationHandle(answer, "sample", {"model": "bit-product", "predictors": preds},
                                function=function, domain=domain)


class RetryExhausted(RuntimeError):
    pass


def out_neighbors(oracle, preds: CoordinatePredictors, d: int, xs, max_retries: int = MAX_RETRIES):
    """The d distinct out-neighbors of each x; rows with a repeated vertex redraw with the next retry."""
    xs = np.asarray(xs, dtype=np.int64)
    out = np.empty((xs.size, d), dtype=np.int64)
    todo = np.arange(xs.size)
    for retry in range(max_retries):
        if todo.size == 0:
            return out
        sub = xs[todo]
        cand = np.stack([_draw_out(oracle, preds, sub, t, retry) for t in range(d)], axis=1)
        srt = np.sort(cand, axis=1)
        ok = np.all(srt[:, 1:] != srt[:, :-1], axis=1) if d > 1 else np.ones(sub.size, bool)
        out[todo[ok]] = cand[ok]
        todo = todo[~ok]
    if todo.size:
        raise RetryExhausted(f"neighbor draw collided {max_retries} times in a row")
    return out


def _draw_out(oracle, preds, xs, t, retry):
    return _draw_bits(oracle, preds, xs, "out", (t,), (retry,))


def outdegree_impl(preds: CoordinatePredictors, d: int,
                   max_retries: int = MAX_RETRIES) -> ImplementationHandle:
    """Support view of a graph whose every vertex has exactly d distinct out-neighbors."""
    if d < 1:
        raise ValueError("out-degree must be at least 1")
    domain = preds.domain
    N = domain.cardinality

    def neighbors(oracle, xs):
        return out_neighbors(oracle, preds, d, xs, max_retries)

    def answer(oracle, rng, size):
        u = rng.integers(0, N, size)
        i = rng.integers(0, d, size)
        v = neighbors(oracle, u)[np.arange(size), i]
        return add_pair_fields({"u": u, "v": v}, N)

    handle = ImplementationHandle(answer, "support",
                                  {"model": "out-degree", "predictors": preds, "d": d,
                                   "max_retries": max_retries}, domain=domain)
    handle.neighbors = neighbors
    return handle
