"""hugeobj command line: gen, learn, eval, truthcheck, run, verify."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import harness


def _config(args) -> dict:
    cfg = harness.load_config(args.config)
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    cfg = harness.apply_overrides(cfg, overrides)
    harness.validate_config(cfg)
    return cfg


def _out(args, cfg) -> Path:
    out = Path(args.out or cfg.get("output", {}).get("dir", "hugeobj-out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump(path: Path, data) -> None:
    path.write_text(json.dumps(harness._jsonable(data), indent=2, sort_keys=True) + "\n")
    print(path)


def _prepare(cfg):
    g_rng, l_rng, e_rng, t_rng = harness._streams(int(cfg.get("seed", 0)))
    target = harness.generate_target(cfg["target"], g_rng)
    dclass = harness.build_class(cfg["class"], target, cfg["learner"])
    return target, dclass, (l_rng, e_rng, t_rng)


def cmd_gen(args) -> int:
    cfg = _config(args)
    out = _out(args, cfg)
    target, _, _ = _prepare(cfg)
    _dump(out / "target.json", harness.target_summary(target))
    if hasattr(target, "codes") and target.codes.size <= 1_000_000:
        u, v = np.divmod(target.codes, target.N)
        (out / "target_edges.txt").write_text("".join(f"{a} {b}\n" for a, b in zip(u.tolist(), v.tolist())))
    return 0


def _learned(cfg):
    target, dclass, (l_rng, e_rng, t_rng) = _prepare(cfg)
    outcome = harness.learn(cfg, target, dclass, l_rng)
    return target, dclass, outcome, e_rng, t_rng


def cmd_learn(args) -> int:
    cfg = _config(args)
    out = _out(args, cfg)
    _, _, outcome, _, _ = _learned(cfg)
    _dump(out / "model.json", {"kind": outcome.kind, "error": outcome.error,
                               "model": outcome.impl.description if outcome.impl else None,
                               "trace": outcome.trace.to_dict(), **outcome.extra})
    return 0 if outcome.error is None else 1


def cmd_eval(args) -> int:
    cfg = _config(args)
    out = _out(args, cfg)
    target, dclass, outcome, e_rng, _ = _learned(cfg)
    if outcome.impl is None:
        print(f"learner failed: {outcome.error}", file=sys.stderr)
        return 1
    gaps = harness.evaluate(cfg, target, dclass, outcome, e_rng)
    (out / "gaps.csv").write_text(gaps.pop("report").to_csv())
    _dump(out / "gaps.json", gaps)
    return 0


def cmd_truthcheck(args) -> int:
    cfg = _config(args)
    out = _out(args, cfg)
    target, _, outcome, _, t_rng = _learned(cfg)
    if outcome.impl is None:
        print(f"learner failed: {outcome.error}", file=sys.stderr)
        return 1
    truth = harness.truthcheck(cfg, target, outcome, t_rng)
    _dump(out / "truth.json", truth)
    return 0 if truth.get("truthful") is not False and truth["consistent"] else 1


def cmd_run(args) -> int:
    cfg = _config(args)
    out = _out(args, cfg)
    report = harness.run(cfg)
    print(report.write(out))
    verdict = report.data["verdict"]
    for f in verdict["failures"]:
        print(f"FAIL {f}", file=sys.stderr)
    print("PASS" if verdict["passed"] else "FAIL")
    return 0 if verdict["passed"] else 1


def cmd_verify(args) -> int:
    report = json.loads(Path(args.report).read_text())
    thresholds = report.get("config", {}).get("thresholds", {})
    if args.thresholds:
        thresholds = dict(thresholds, **json.loads(Path(args.thresholds).read_text()))
    for item in args.threshold or ():
        key, _, raw = item.partition("=")
        thresholds[key] = json.loads(raw)
    verdict = harness.verify(report, thresholds)
    for f in verdict["failures"]:
        print(f"FAIL {f}")
    print("PASS" if verdict["passed"] else "FAIL")
    return 0 if verdict["passed"] else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hugeobj", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    commands = {"gen": (cmd_gen, "generate the target and audit it"),
                "learn": (cmd_learn, "learn a model and write its descriptor"),
                "eval": (cmd_eval, "learn, then write the gap report"),
                "truthcheck": (cmd_truthcheck, "learn, then audit sampled objects"),
                "run": (cmd_run, "full pipeline plus verify; exit 0 iff it passes")}
    for name, (fn, help_) in commands.items():
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config entry, e.g. learner.params.eps=0.2")
        p.set_defaults(fn=fn)
    p = sub.add_parser("verify", help="check a report against thresholds")
    p.add_argument("--report", required=True)
    p.add_argument("--thresholds", help="JSON file merged over the report's thresholds")
    p.add_argument("--threshold", action="append", metavar="KEY=VALUE")
    p.set_defaults(fn=cmd_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (harness.ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
