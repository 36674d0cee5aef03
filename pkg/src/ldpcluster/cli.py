"""Command-line interface.

Subcommands: gen, run, eval, scale, lb, selftest, audit-dp.
Exit codes: 0 success, 2 refusal (well-formed request the parameters cannot
serve, with a machine-readable reason), 1 unexpected error.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

from .config import ExperimentConfig, apply_overrides, load_config
from .errors import RefusalError
from .geometry import load_points
from .runner import (
    cmd_audit_dp,
    cmd_eval,
    cmd_gen,
    cmd_lb,
    cmd_run,
    cmd_scale,
    cmd_selftest,
    file_sha256,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_REFUSAL = 2


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None, help="config file (key=value sections)")
    p.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override one config entry (repeatable)",
    )
    for flag, attr, typ in [
        ("--n", "n", int),
        ("--d", "d", int),
        ("--k", "k", int),
        ("--p", "p", int),
        ("--epsilon", "epsilon", float),
        ("--delta", "delta", float),
        ("--beta", "beta", float),
        ("--seed", "seed", int),
        ("--mode", "mode", str),
        ("--outdir", "outdir", str),
    ]:
        p.add_argument(flag, dest=f"cfg_{attr}", type=typ, default=None)


def _build_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    apply_overrides(cfg, args.overrides)
    for attr in ("n", "d", "k", "p", "epsilon", "delta", "beta", "seed", "mode", "outdir"):
        val = getattr(args, f"cfg_{attr}", None)
        if val is not None:
            setattr(cfg, attr, val)
    return cfg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ldpcluster",
        description="Locally private k-means / k-median clustering simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate a synthetic point file")
    _add_common(p_gen)
    p_gen.add_argument("--points", type=Path, required=True, help="output point file")

    p_run = sub.add_parser("run", help="run the private pipeline on a point file")
    _add_common(p_run)
    p_run.add_argument("--points", type=Path, required=True)
    p_run.add_argument("--no-instrument", action="store_true", help="skip the utility audit")

    p_eval = sub.add_parser("eval", help="evaluate a run artifact against baselines")
    _add_common(p_eval)
    p_eval.add_argument("--artifact", type=Path, required=True)
    p_eval.add_argument("--points", type=Path, required=True)

    p_scale = sub.add_parser("scale", help="additive-error scaling study over n")
    _add_common(p_scale)
    p_scale.add_argument("--n-grid", type=str, required=True, help="comma-separated n values")
    p_scale.add_argument("--seeds", type=int, default=20)

    p_lb = sub.add_parser("lb", help="additive-error floor experiment (bit counting)")
    _add_common(p_lb)
    p_lb.add_argument("--oblivious-trials", type=int, default=10_000)
    p_lb.add_argument("--pipeline-trials", type=int, default=10)

    p_self = sub.add_parser("selftest", help="fast internal consistency battery")
    _add_common(p_self)

    p_audit = sub.add_parser("audit-dp", help="likelihood-ratio audit of the shipped randomizers")
    _add_common(p_audit)
    p_audit.add_argument("--samples", type=int, default=10**6)

    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except RefusalError as exc:
        payload = {"code": exc.code, "message": str(exc), "detail": exc.detail}
        print(json.dumps(payload, sort_keys=True, default=str), file=sys.stderr)
        outdir = getattr(args, "cfg_outdir", None)
        try:
            cfg = _build_config(args)
            Path(cfg.outdir).mkdir(parents=True, exist_ok=True)
            (Path(cfg.outdir) / "refusal.json").write_text(
                json.dumps(payload, sort_keys=True, default=str), "utf-8"
            )
        except Exception:
            pass
        return EXIT_REFUSAL
    except Exception:
        traceback.print_exc()
        return EXIT_ERROR


def _dispatch(args) -> int:
    cfg = _build_config(args)
    outdir = Path(cfg.outdir)

    if args.command == "gen":
        info = cmd_gen(cfg, args.points)
        print(json.dumps(info, sort_keys=True))
        return EXIT_OK

    if args.command == "run":
        points = load_points(args.points)
        sha = file_sha256(args.points)
        _, info = cmd_run(cfg, points, outdir, sha, instrument=not args.no_instrument)
        print(json.dumps(info, sort_keys=True))
        return EXIT_OK

    if args.command == "eval":
        points = load_points(args.points)
        sha = file_sha256(args.points)
        info = json.loads((args.artifact / "run_info.json").read_text("utf-8"))
        if info["data_sha256"] != sha:
            raise RefusalError(
                "HASH_MISMATCH",
                "the point file does not match the one the artifact was produced from",
                {"artifact": info["data_sha256"], "points": sha},
            )
        metrics = cmd_eval(args.artifact, points, cfg)
        print(json.dumps({k: v for k, v in metrics.items() if k != "p"}, sort_keys=True))
        return EXIT_OK

    if args.command == "scale":
        n_grid = [int(v) for v in args.n_grid.split(",") if v.strip()]
        rows, fit = cmd_scale(cfg, n_grid, args.seeds, outdir)
        print(json.dumps({"rows": rows, "fit": fit}, sort_keys=True))
        return EXIT_OK

    if args.command == "lb":
        out = cmd_lb(
            cfg, outdir, oblivious_trials=args.oblivious_trials, pipeline_trials=args.pipeline_trials
        )
        print(json.dumps(out, sort_keys=True))
        return EXIT_OK

    if args.command == "selftest":
        checks = cmd_selftest()
        ok = True
        for name, passed, note in checks:
            print(f"{'PASS' if passed else 'FAIL'} {name}: {note}")
            ok &= passed
        return EXIT_OK if ok else EXIT_ERROR

    if args.command == "audit-dp":
        outdir.mkdir(parents=True, exist_ok=True)
        results, all_pass = cmd_audit_dp(outdir / "audit_dp.csv", samples=args.samples, seed=cfg.seed)
        for r in results:
            print(r.describe())
        return EXIT_OK if all_pass else EXIT_REFUSAL

    raise ValueError(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
