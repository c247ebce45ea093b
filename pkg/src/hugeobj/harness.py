"""Config-driven experiments: generate a target, learn a model, measure gaps, audit truthfulness.

A config is a JSON document::

    {"name": "...", "seed": 7,
     "target":  {"generator": "random-support-k", "params": {"n": 10, "k": 128}},
     "learner": {"kind": "fixed-weight", "params": {"eps": 0.1, "gamma": 0.05, "delta": 0.05}},
     "class":   {"generator": "random-sets", "params": {"t": 8, "seed": 5}},
     "eval":    {"samples": 100000, "delta": 0.05, "materialize": 200},
     "thresholds": {"gap_eps": 1, "gap_radius": 2, "truthful": true}}

Reports are deterministic given the config; wall-clock timings are kept apart.
"""
from __future__ import annotations

import copy
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import generators
from .auditors import AuditorParams, audit_sample_access, audit_support_access
from .distinguishers import (coordinate_tests, dyadic_intervals, gap_report, partition_cells,
                             random_cuts, random_sets)
from .fixed_weight import learn_fixed_weight
from .graph_learners import (NoDenseModelError, SparseReductionParams, learn_dense_graph,
                             learn_fixed_edges, learn_fixed_outdegree_dense,
                             learn_sparse_dense_model, no_dense_model_witness, upper_uniform_check)
from .multiaccuracy import (CappedPredictor, LearnerTrace, NonConvergenceError,
                            bernoulli_model_impl, learn_multiaccurate)
from .objects import AccessView, DomainSpec, to_ordinary
from .regular_graphs import Partition, degree_audit, learn_uniform_degree, uniform_degree_impl
from .support_boost import learn_support_access, rejection_rounds, rejection_sampler_impl
from .vector_boost import (CoordinatePredictors, bitstring_impl, learn_bitstring,
                           learn_outdegree_d, outdegree_impl)

EXACT_CUTOFF = 1 << 12
UNIFORMITY_SAMPLED_TRIALS = 500

LEARNERS = ("multiaccuracy", "fixed-weight", "support", "bitstring", "out-degree", "dense-graph",
            "fixed-edges", "fixed-outdegree", "sparse-dense", "uniform-degree")
CLASSES = ("random-sets", "dyadic", "coordinate", "random-cuts", "partition-cells")


class ConfigError(ValueError):
    pass


def load_config(path) -> dict:
    return json.loads(Path(path).read_text())


def apply_overrides(config: dict, overrides) -> dict:
    """``key.path=value`` overrides; values parse as JSON when they can."""
    config = copy.deepcopy(config)
    for item in overrides or ():
        key, _, raw = item.partition("=")
        if not _:
            raise ConfigError(f"override {item!r} is not key=value")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = config
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    return config


def validate_config(config: dict) -> None:
    for section in ("target", "learner", "class"):
        if section not in config:
            raise ConfigError(f"config lacks a {section!r} section")
    if config["target"].get("generator") not in generators.REGISTRY:
        raise ConfigError(f"unknown generator {config['target'].get('generator')!r}")
    if config["learner"].get("kind") not in LEARNERS:
        raise ConfigError(f"unknown learner {config['learner'].get('kind')!r}")
    if config["class"].get("generator") not in CLASSES:
        raise ConfigError(f"unknown class generator {config['class'].get('generator')!r}")
    lp = config["learner"].get("params", {})
    for name in ("eps", "gamma", "delta"):
        if name in lp and not 0 < float(lp[name]) < 1:
            raise ConfigError(f"learner.{name} must lie in (0, 1)")


def _streams(seed: int):
    gen, learn, ev, truth = np.random.SeedSequence(seed).spawn(4)
    return tuple(np.random.default_rng(s) for s in (gen, learn, ev, truth))


# --- pipeline pieces --------------------------------------------------------

def generate_target(spec: dict, rng: np.random.Generator):
    """Build a registered ground truth; generators audit their own truth property."""
    return generators.generate(spec["generator"], spec.get("params", {}), rng)


def target_summary(target) -> dict:
    if hasattr(target, "domain"):
        out = {"type": "function", "name": target.name, "domain": target.domain.to_dict(),
               "range_bits": target.range_bits}
        if target.range_bits == 0:
            out["support_size"] = int(target.values.sum())
        return out
    N = target.N
    out = {"type": "graph", "name": target.name, "N": N, "directed": target.directed,
           "ordered_edges": int(target.codes.size)}
    deg = np.bincount(target.codes // N, minlength=N)
    out["out_degree_min"], out["out_degree_max"] = int(deg.min()), int(deg.max())
    return out


def _partition_for(target, params) -> Partition:
    if hasattr(target, "labels"):
        return Partition(target.labels)
    return Partition.contiguous(target.N, int(params.get("t", 1)))


def build_class(spec: dict, target, learner: dict) -> list:
    gen = spec["generator"]
    p = spec.get("params", {})
    t = int(p.get("t", 8))
    density = float(p.get("density", 0.5))
    seed = int(p.get("seed", 0))
    kind = learner["kind"]
    if gen == "random-sets":
        return random_sets(target.domain, t, density, seed)
    if gen == "dyadic":
        return dyadic_intervals(target.domain, int(p.get("levels", 3)))
    if gen == "coordinate":
        domain = target.domain if hasattr(target, "domain") else target.vertices
        n_out = int(p.get("n_out", target.range_bits if hasattr(target, "range_bits") else domain.n))
        return coordinate_tests(domain, random_sets(domain, t, density, seed), n_out)
    if gen == "random-cuts":
        return random_cuts(target.vertices, t, density, seed)
    if gen == "partition-cells":
        return partition_cells(_partition_for(target, learner.get("params", {})))
    raise ConfigError(f"unknown class generator {gen!r}")


def _aparams(lp: dict) -> AuditorParams:
    return AuditorParams(float(lp.get("eps", 0.1)), float(lp.get("gamma", 0.05)),
                         float(lp.get("delta", 0.05)), lp.get("sample_budget"))


def _check_exact(lp: dict, cardinality: int) -> bool:
    exact = bool(lp.get("exact_potentials", False))
    if exact and cardinality > EXACT_CUTOFF:
        raise ConfigError(f"exact mode needs a domain of at most {EXACT_CUTOFF} points")
    return exact


@dataclass
class LearnOutcome:
    impl: object
    trace: LearnerTrace
    kind: str
    eval_view: str  # access kind of the target used for gap evaluation
    extra: dict = field(default_factory=dict)
    error: Optional[str] = None


def learn(config: dict, target, dclass: list, rng: np.random.Generator) -> LearnOutcome:
    kind = config["learner"]["kind"]
    lp = config["learner"].get("params", {})
    trace = LearnerTrace()
    potentials: list = []
    extra: dict = {}
    if kind == "multiaccuracy":
        table = target.values if _check_exact(lp, target.domain.cardinality) else None
        hook = (lambda b, a, f: potentials.append(
            float(np.sum((table - b.table()) ** 2) - np.sum((table - a.table()) ** 2)))) \
            if table is not None else None
        p = learn_multiaccurate(AccessView(target, "sample"), audit_sample_access, dclass,
                                _aparams(lp), rng, base=float(lp.get("base", 0.5)),
                                trace=trace, on_update=hook)
        impl, view = bernoulli_model_impl(p), "sample"
    elif kind == "fixed-weight":
        k = int(lp.get("k", target.values.sum()))
        impl = learn_fixed_weight(AccessView(target, "sample"), k, audit_sample_access, dclass,
                                  _aparams(lp), rng, C=float(lp.get("C", 16.0)), trace=trace)
        view = "sample"
    elif kind == "support":
        N = target.domain.cardinality
        alpha = float(lp.get("alpha", target.values.sum() / N))
        table = target.values if _check_exact(lp, N) else None
        hook = (lambda kind_, b, a, f: potentials.append(
            {"kind": kind_, "drop": float(np.sum((table - b) ** 2) - np.sum((table - a) ** 2))})) \
            if table is not None else None
        p = learn_support_access(AccessView(target, "support"), alpha, audit_support_access,
                                 dclass, _aparams(lp), rng, trace=trace, on_update=hook)
        impl = rejection_sampler_impl(p, rejection_rounds(alpha, float(lp.get("fail", 1e-9))))
        view = "support"
    elif kind == "bitstring":
        tables = _bit_tables(target) if _check_exact(lp, target.domain.cardinality) else None
        hook = _coord_hook(tables, potentials)
        preds = learn_bitstring(AccessView(target, "sample"), dclass, audit_sample_access,
                                _aparams(lp), rng, trace=trace, on_update=hook)
        impl, view = bitstring_impl(preds), "sample"
    elif kind == "out-degree":
        d = int(lp["d"])
        preds = learn_outdegree_d(AccessView(target, "support"), d, dclass, audit_sample_access,
                                  _aparams(lp), rng, trace=trace)
        impl, view = outdegree_impl(preds, d), "support"
    elif kind == "dense-graph":
        impl = learn_dense_graph(AccessView(target, "sample"), dclass, audit_sample_access,
                                 _aparams(lp), rng, trace=trace)
        view = "sample"
    elif kind == "fixed-edges":
        m = int(lp.get("m", target.codes.size))
        impl = learn_fixed_edges(AccessView(target, "sample"), m, dclass, audit_sample_access,
                                 _aparams(lp), rng, trace=trace)
        view = "sample"
    elif kind == "fixed-outdegree":
        impl = learn_fixed_outdegree_dense(AccessView(target, "sample"), int(lp["d"]), dclass,
                                           audit_sample_access, _aparams(lp), rng, trace=trace)
        view = "sample"
    elif kind == "sparse-dense":
        sp = SparseReductionParams(float(lp["gamma_density"]), float(lp.get("eta", 1 / 32)),
                                   float(lp.get("eps", 0.1)), float(lp.get("eps_prime", 0.05)),
                                   float(lp.get("delta", 0.05)))
        extra["uniformity"] = _uniformity_diagnostics(target, sp, lp, rng)
        try:
            impl = learn_sparse_dense_model(AccessView(target, "support"), sp, dclass, rng=rng,
                                            max_updates=lp.get("max_updates"), trace=trace)
        except NoDenseModelError as exc:
            return LearnOutcome(None, trace, kind, "support", extra, error=str(exc))
        view = "support"
    elif kind == "uniform-degree":
        part = _partition_for(target, lp)
        d = int(lp.get("d", getattr(target, "degree", 0)))
        fit = learn_uniform_degree(AccessView(target, "support"), part, d, float(lp.get("eps", 0.05)),
                                   float(lp.get("delta", 0.05)), rng, lp.get("samples"))
        extra["fit"] = fit.to_dict()
        impl, view = uniform_degree_impl(part, fit.table, d), "support"
    else:
        raise ConfigError(f"unknown learner {kind!r}")
    if "security_bits" in lp:
        impl = _ordinary(impl, int(lp["security_bits"]))
    if potentials:
        extra["potential_drops"] = potentials
    return LearnOutcome(impl, trace, kind, view, extra)


def _ordinary(impl, bits):
    extra = {k: v for k, v in vars(impl).items() if k not in ("answer", "access_kind", "description",
                                                             "function", "domain", "oracle_mode",
                                                             "seed_bytes")}
    out = to_ordinary(impl, bits)
    for k, v in extra.items():
        setattr(out, k, v)
    return out


def _bit_tables(target) -> np.ndarray:
    n = target.range_bits
    return np.stack([(target.values >> j) & 1 for j in range(n)]).astype(np.float64)


def _coord_hook(tables, sink):
    if tables is None:
        return None

    def hook(j, before, after, finding):
        sink.append({"j": j, "drop": float(np.sum((tables[j] - before.table()) ** 2)
                                           - np.sum((tables[j] - after.table()) ** 2))})
    return hook


def _uniformity_diagnostics(target, sp: SparseReductionParams, lp: dict, rng) -> dict:
    A = generators.adjacency(target)
    N = A.shape[0]
    mode = "exact" if N <= 12 else "sampled"
    verdict = upper_uniform_check(A, sp.eta, sp.gamma, mode,
                                  trials=int(lp.get("uniformity_trials", UNIFORMITY_SAMPLED_TRIALS)),
                                  rng=rng)
    out = {"mode": mode, "verdict": verdict.to_dict()}
    if verdict.witness is not None and A.sum() > 0:
        U, V = verdict.witness
        size = min(U.size, V.size) / N
        wd = float(lp.get("witness_delta", 0.001))
        out["witness"] = {"eps": size, "delta": wd,
                          "no_dense_model": no_dense_model_witness(A, U, V, sp.gamma, wd, size)}
    return out


def _target_view(target, kind: str) -> AccessView:
    return AccessView(target, kind)


def evaluate(config: dict, target, dclass: list, outcome: LearnOutcome,
             rng: np.random.Generator) -> dict:
    ev = config.get("eval", {})
    samples = int(ev.get("samples", 20000))
    delta = float(ev.get("delta", 0.05))
    rep = gap_report(dclass, _target_view(target, outcome.eval_view), outcome.impl, samples, delta,
                     rng, fresh=bool(ev.get("fresh", True)))
    return {"report": rep, **rep.to_dict()}


def truthcheck(config: dict, target, outcome: LearnOutcome, rng: np.random.Generator) -> dict:
    """Materialize per-seed objects and audit the learner's structural promise."""
    impl, kind = outcome.impl, outcome.kind
    lp = config["learner"].get("params", {})
    count = int(config.get("eval", {}).get("materialize", 20))
    out: dict = {"objects": count}
    consistent = True
    if impl.function is not None:
        card = impl.domain.cardinality
        for _ in range(min(count, 10)):
            oracle = impl.new_oracle(rng)
            xs = rng.integers(0, card, 64)
            consistent &= bool(np.array_equal(impl.function(oracle, xs), impl.function(oracle, xs)))
    out["consistent"] = consistent
    if kind in ("fixed-weight", "fixed-edges"):
        want = int(lp.get("k", lp.get("m", target.values.sum() if hasattr(target, "values")
                                      else target.codes.size)))
        weights = [int(impl.sampler.materialize(impl.new_oracle(rng)).sum()) for _ in range(count)]
        out.update(expected=want, distinct_weights=sorted(set(weights)),
                   truthful=all(w == want for w in weights))
    elif kind == "fixed-outdegree":
        d = int(lp["d"])
        bad = 0
        for _ in range(count):
            A = impl.rows.adjacency(impl.new_oracle(rng))
            bad += int(np.sum(A.sum(1) != d))
        out.update(expected=d, bad_rows=bad, truthful=bad == 0)
    elif kind == "out-degree":
        d = int(lp["d"])
        N = impl.domain.cardinality
        per_seed = max(1, int(config.get("eval", {}).get("vertices_per_seed", 10)))
        bad = 0
        for _ in range(count):
            oracle = impl.new_oracle(rng)
            nb = impl.neighbors(oracle, rng.integers(0, N, per_seed))
            bad += int(np.sum([np.unique(r).size != d for r in nb]))
        out.update(expected=d, neighborhoods=count * per_seed, bad_neighborhoods=bad, truthful=bad == 0)
    elif kind == "uniform-degree":
        audits = [degree_audit(impl.neighbors(impl.new_oracle(rng))) for _ in range(count)]
        out.update(truthful=all(a["regular"] and a["simple"] for a in audits),
                   irregular=sum(not a["regular"] for a in audits),
                   not_simple=sum(not a["simple"] for a in audits))
        limit = int(config.get("eval", {}).get("involution_max_n", 200))
        N = impl.domain.cardinality
        if N <= limit:
            oracle = impl.new_oracle(rng)
            d = impl.description["d"]
            u = np.repeat(np.arange(N), d)
            l = np.tile(np.arange(d), N)
            v, l2 = impl.endpoint(oracle, u, l)
            u3, l3 = impl.endpoint(oracle, v, l2)
            out["involution"] = bool(np.array_equal(u3, u) and np.array_equal(l3, l))
    else:
        out["truthful"] = None  # no structural promise beyond consistency
    return out


def _jsonable(obj):
    if isinstance(obj, (CappedPredictor, CoordinatePredictors)):
        try:
            return obj.to_dict()
        except ValueError:
            return {"terms": "unserializable"}
    if hasattr(obj, "predictor") and isinstance(getattr(obj, "predictor"), CappedPredictor):
        return _jsonable(obj.predictor)
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items() if k != "report"}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, DomainSpec):
        return obj.to_dict()
    return obj


@dataclass
class RunReport:
    data: dict
    timings: dict
    gaps_csv: str = ""

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.data), indent=2, sort_keys=True) + "\n"

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(self.to_json())
        (out / "gaps.csv").write_text(self.gaps_csv)
        (out / "timings.json").write_text(json.dumps(self.timings, indent=2, sort_keys=True) + "\n")
        return out / "report.json"


def run(config: dict) -> RunReport:
    """generate -> learn -> evaluate -> truthcheck, deterministic per (config, seed)."""
    validate_config(config)
    seed = int(config.get("seed", 0))
    g_rng, l_rng, e_rng, t_rng = _streams(seed)
    timings = {}
    t0 = time.perf_counter()
    target = generate_target(config["target"], g_rng)
    dclass = build_class(config["class"], target, config["learner"])
    timings["generate"] = time.perf_counter() - t0
    data = {"config": config, "target": target_summary(target),
            "class": [D.name for D in dclass]}
    t0 = time.perf_counter()
    try:
        outcome = learn(config, target, dclass, l_rng)
    except NonConvergenceError as exc:
        outcome = LearnOutcome(None, LearnerTrace(), config["learner"]["kind"], "", error=str(exc))
    timings["learn"] = time.perf_counter() - t0
    data["learner"] = {"kind": outcome.kind, "error": outcome.error,
                       "updates": len(outcome.trace.updates),
                       "calibrations": len(outcome.trace.calibrations),
                       "audits": outcome.trace.audits, "trace": outcome.trace.to_dict(),
                       **outcome.extra}
    csv = ""
    if outcome.impl is not None:
        data["model"] = outcome.impl.description
        t0 = time.perf_counter()
        gaps = evaluate(config, target, dclass, outcome, e_rng)
        timings["evaluate"] = time.perf_counter() - t0
        csv = gaps.pop("report").to_csv()
        data["gaps"] = gaps
        t0 = time.perf_counter()
        data["truth"] = truthcheck(config, target, outcome, t_rng)
        timings["truthcheck"] = time.perf_counter() - t0
    data["verdict"] = verify(data, config.get("thresholds", {}))
    return RunReport(data, timings, csv)


def verify(report: dict, thresholds: dict) -> dict:
    """Compare a report against thresholds; every failure names what broke."""
    failures = []
    lp = report.get("config", {}).get("learner", {}).get("params", {})
    learner = report.get("learner", {})
    if learner.get("error") and not thresholds.get("allow_error", False):
        failures.append(f"learner error: {learner['error']}")
    gaps = report.get("gaps")
    if gaps is not None and any(k in thresholds for k in ("max_gap", "gap_eps", "gap_radius")):
        bound = thresholds.get("max_gap")
        if bound is None:
            bound = (float(thresholds.get("gap_eps", 0)) * float(lp.get("eps", 0.1))
                     + float(thresholds.get("gap_radius", 0)) * gaps["radius"])
        for e in gaps["entries"]:
            if e["gap"] > bound:
                failures.append(f"gap {e['gap']:.6g} on {e['name']} exceeds {bound:.6g}")
    if thresholds.get("truthful"):
        truth = report.get("truth", {})
        if truth.get("truthful") is False:
            failures.append("truthfulness audit failed")
        if truth.get("consistent") is False:
            failures.append("per-seed consistency failed")
        if truth.get("involution") is False:
            failures.append("port involution failed")
    if "max_updates" in thresholds and learner.get("updates", 0) > int(thresholds["max_updates"]):
        failures.append(f"{learner['updates']} updates exceed {thresholds['max_updates']}")
    if "expect_no_dense_model" in thresholds:
        witness = learner.get("uniformity", {}).get("witness", {}).get("no_dense_model", False)
        if bool(witness) != bool(thresholds["expect_no_dense_model"]):
            failures.append(f"no-dense-model witness was {witness}")
    return {"passed": not failures, "failures": failures}
