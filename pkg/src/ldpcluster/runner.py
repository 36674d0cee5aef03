"""Experiment orchestration: generate, run, evaluate, scale, floor study.

A `run` produces an artifact directory:

    config.txt      echo of the configuration that ran
    transcript.bin  every round's reports (the adversary's view)
    ledger.csv      privacy spends, one row per protocol step
    candidates.csv  all candidate centers with weights and kept flags
    centers.csv     the k output centers
    audit.csv       instrumented utility-chain audit (server-side truth)
    run_info.json   sizes, hashes, round count, budget verdict
    run.png         scatter of data, candidates, and output

Evaluation and the scaling/floor studies write plot-ready CSVs plus a PNG
rendering next to each.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, emit_config
from .datagen import generate
from .dp_audit import AuditResult, audit_gaussian, audit_unary
from .errors import RefusalError
from .geometry import CenterSet, PointSet, WeightedPointSet, cost as geo_cost, opt_oracle, save_points
from .lower_bound import floor_experiment, oblivious_protocol
from .pipeline import PipelineResult, budget_check, weighted_centers
from .plots import plot_eval, plot_lb, plot_run, plot_scale
from .seeds import derive_rng, derive_seed
from .solver import SolverConfig, solve
from .stats import mean_ci95
from .transcript import read_transcript
from .vector import avg_sigma, gaussian_sigma

FLOAT_FMT = "%.12g"


def _fmt(v) -> str:
    if isinstance(v, float):
        return FLOAT_FMT % v
    return str(v)


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with path.open("w", encoding="ascii", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def file_sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ----------------------------------------------------------------- commands


def cmd_gen(cfg: ExperimentConfig, points_path: Path) -> dict:
    rng = derive_rng(cfg.seed, "gen")
    points, labels, means = generate(cfg.n, cfg.d, cfg.lam, cfg.generator_spec(), rng)
    points_path.parent.mkdir(parents=True, exist_ok=True)
    save_points(points_path, points)
    labels_path = points_path.with_suffix(".labels.csv")
    write_csv(labels_path, ["index", "label"], [[i, int(l)] for i, l in enumerate(labels)])
    return {
        "points": str(points_path),
        "labels": str(labels_path),
        "n": points.n,
        "d": points.dim,
        "sha256": file_sha256(points_path),
    }


def cmd_run(
    cfg: ExperimentConfig, points: PointSet, outdir: Path, data_sha: str, instrument: bool = True
) -> tuple[PipelineResult, dict]:
    outdir.mkdir(parents=True, exist_ok=True)
    result = weighted_centers(points, cfg.pipeline_config(), seed=cfg.seed, instrument=instrument)

    (outdir / "config.txt").write_text(emit_config(cfg), encoding="utf-8")
    result.transcript.write(outdir / "transcript.bin")
    result.ledger.write_csv(outdir / "ledger.csv")

    kept_pos = {c: i for i, c in enumerate(result.kept)}
    cand_rows = []
    for i, cand in enumerate(result.candidates):
        row = [
            cand.label,
            cand.radius_index,
            cand.cid[1],
            cand.cid[2],
            *[float(x) for x in cand.center],
            float(result.weights_initial[i]),
            int(i in kept_pos),
            float(result.weights_final[kept_pos[i]]) if i in kept_pos else "",
        ]
        cand_rows.append(row)
    coord_cols = [f"x{j}" for j in range(points.dim)]
    write_csv(
        outdir / "candidates.csv",
        ["id", "radius_index", "rep", "hash_value", *coord_cols, "weight_initial", "kept", "weight_final"],
        cand_rows,
    )
    write_csv(
        outdir / "centers.csv",
        coord_cols,
        [[float(x) for x in row] for row in result.final.centers],
    )

    # Per-pass audit: step, quantity, true value, estimate (instrumented).
    pass_rows = []
    for j in sorted(result.sweep):
        boost = result.sweep[j]
        for m, p in enumerate(boost.passes):
            v_true = p.audit.get("v_true", {})
            for u in sorted(p.heavy_initial):
                pass_rows.append(
                    [f"r{j}/m{m}/validate", f"u{u}", v_true.get(u, ""), p.audit["v_est"].get(u, "")]
                )
            for u, est in sorted(p.audit.get("heavy_estimates", {}).items()):
                pass_rows.append(
                    [f"r{j}/m{m}/heavy", f"u{u}", p.audit.get("true_counts", {}).get(u, ""), est]
                )
    write_csv(outdir / "pass_audit.csv", ["step", "quantity", "true_value", "estimate"], pass_rows)
    for j in sorted(result.sweep):
        hdr, rws = result.sweep[j].csv_rows()
        write_csv(outdir / f"boost_r{j}.csv", hdr, rws)

    audit_rows = []
    if result.audit:
        a = result.audit
        audit_rows.append(["deleted_max_ratio", "", a["deleted_max_ratio"]])
        audit_rows.append(["kept_subset_cost", "", a["kept_subset_cost"]])
        audit_rows.append(["assignment_cost", "", a["assignment_cost"]])
        audit_rows.append(["proxy_over_true", "", a["proxy_over_true"]])
        audit_rows.append(["true_over_proxy", "", a["true_over_proxy"]])
        audit_rows.append(["weight_ratio_all_ok", "", int(a["weight_ratio_all_ok"])])
        for label, ratio in sorted(a["candidate_to_kept_ratio"].items()):
            audit_rows.append(["candidate_to_kept_ratio", label, ratio])
        for label, ok in sorted(a["weight_ratio_ok"].items()):
            audit_rows.append(["weight_ratio_ok", label, int(ok)])
        for i, (cs, cb) in enumerate(a["proxy_cost_pairs"]):
            audit_rows.append(["proxy_cost_pair", f"D{i}", f"{cs:.12g}|{cb:.12g}"])
    write_csv(outdir / "audit.csv", ["quantity", "key", "value"], audit_rows)

    total = result.ledger.total()
    info = {
        "n": points.n,
        "d": points.dim,
        "k": cfg.k,
        "p": cfg.p,
        "seed": cfg.seed,
        "rounds": result.rounds,
        "data_sha256": data_sha,
        "epsilon_configured": cfg.epsilon,
        "delta_configured": cfg.delta,
        "epsilon_spent": total.eps_float,
        "delta_spent": total.delta_float,
        "within_budget": bool(budget_check(result, cfg.pipeline_config())),
        "candidates": len(result.candidates),
        "kept": len(result.kept),
        "theta": result.theta,
    }
    (outdir / "run_info.json").write_text(json.dumps(info, indent=1, sort_keys=True), "utf-8")
    plot_run(points.points, result.candidates, result.kept, result.final.centers, outdir / "run.png")
    return result, info


def baseline_cost(points: PointSet, cfg: ExperimentConfig) -> float:
    wps = WeightedPointSet(points.points, np.ones(points.n))
    res = solve(wps, cfg.k, cfg.p, cfg.solver_config(), seed=derive_seed(cfg.seed, "baseline"))
    return geo_cost(points, res.centers, cfg.p)


def cmd_eval(artifact_dir: Path, points: PointSet, cfg: ExperimentConfig) -> dict:
    info = json.loads((artifact_dir / "run_info.json").read_text("utf-8"))
    data_sha = info["data_sha256"]
    # The caller passes the freshly hashed file; mismatches are refusals.
    centers_rows = (artifact_dir / "centers.csv").read_text("ascii").strip().splitlines()[1:]
    centers = np.array([[float(v) for v in row.split(",")] for row in centers_rows])
    cost_private = geo_cost(points, CenterSet(centers), cfg.p)
    cost_base = baseline_cost(points, cfg)
    ratio = cost_private / cost_base if cost_base > 0 else math.inf
    residual = cost_private - cfg.ratio_cap * cost_base

    opt_discrete = None
    if math.comb(points.n, cfg.k) <= 10**6:
        _, opt_discrete = opt_oracle(points, cfg.k, cfg.p, points.points)

    metrics = {
        "cost_private": cost_private,
        "cost_baseline": cost_base,
        "ratio": ratio,
        "additive_residual": residual,
        "opt_discrete": opt_discrete,
        "p": cfg.p,
        "data_sha256": data_sha,
    }
    write_csv(
        artifact_dir / "metrics.csv",
        ["cost_private", "cost_baseline", "ratio", "additive_residual", "opt_discrete"],
        [[cost_private, cost_base, ratio, residual, "" if opt_discrete is None else opt_discrete]],
    )
    plot_eval(metrics, artifact_dir / "eval.png")
    return metrics


def check_geometric(n_grid: list[int]) -> None:
    if len(n_grid) < 4:
        raise RefusalError("GRID_TOO_SMALL", "the scaling study needs at least 4 population sizes")
    ratios = [n_grid[i + 1] / n_grid[i] for i in range(len(n_grid) - 1)]
    if max(ratios) / min(ratios) > 1.25 or min(ratios) <= 1.0:
        raise RefusalError("GRID_NOT_GEOMETRIC", f"grid spacing must be geometric, got {n_grid}")


def cmd_scale(
    cfg: ExperimentConfig, n_grid: list[int], seeds: int, outdir: Path
) -> tuple[list[dict], dict]:
    check_geometric(sorted(n_grid))
    if seeds < 1:
        raise RefusalError("NO_SEEDS", "need at least one seed per cell")
    outdir.mkdir(parents=True, exist_ok=True)
    rows = []
    partial = False
    for n in sorted(n_grid):
        residuals = []
        costs = []
        refused = 0
        for s in range(seeds):
            cell_cfg = ExperimentConfig(**{**cfg.__dict__, "n": int(n), "seed": derive_seed(cfg.seed, "scale", n, s)})
            try:
                rng = derive_rng(cell_cfg.seed, "gen")
                points, _, _ = generate(cell_cfg.n, cell_cfg.d, cell_cfg.lam, cell_cfg.generator_spec(), rng)
                result = weighted_centers(points, cell_cfg.pipeline_config(), seed=cell_cfg.seed)
                cost_private = geo_cost(points, result.final, cell_cfg.p)
                cost_base = baseline_cost(points, cell_cfg)
                residuals.append(cost_private - cfg.ratio_cap * cost_base)
                costs.append(cost_private)
            except RefusalError:
                refused += 1
                partial = True
        if residuals:
            mean_r, ci = mean_ci95(residuals)
            mean_c = sum(costs) / len(costs)
        else:
            mean_r, ci, mean_c = math.nan, math.nan, math.nan
        rows.append(
            {"n": int(n), "mean_residual": mean_r, "ci95": ci, "mean_cost": mean_c,
             "seeds": len(residuals), "refused": refused}
        )

    # A residual at float-roundoff scale relative to the run's own cost (or
    # to the ball scale when costs vanish) counts as flat zero.
    def _usable(r):
        floor = 1e-9 * max(abs(r.get("mean_cost", 0.0)), r["n"] * cfg.lam * 1e-12, 1e-300)
        return math.isfinite(r["mean_residual"]) and r["mean_residual"] > floor

    usable = [r for r in rows if _usable(r)]
    if len(usable) >= 2:
        xs = np.log([r["n"] for r in usable])
        ys = np.log([r["mean_residual"] for r in usable])
        slope, intercept = np.polyfit(xs, ys, 1)
        resid = ys - (slope * xs + intercept)
        ss_tot = float(np.sum((ys - ys.mean()) ** 2))
        r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else math.nan
        fit = {"slope": float(slope), "intercept": float(intercept), "r2": r2, "degenerate": False, "partial": partial}
    else:
        fit = {"slope": math.nan, "intercept": math.nan, "r2": math.nan, "degenerate": True, "partial": partial}

    write_csv(
        outdir / "scaling.csv",
        ["n", "mean_residual", "ci95", "mean_cost", "seeds", "refused"],
        [[r["n"], r["mean_residual"], r["ci95"], r["mean_cost"], r["seeds"], r["refused"]] for r in rows],
    )
    write_csv(
        outdir / "scaling_fit.csv",
        ["slope", "intercept", "r2", "degenerate", "partial"],
        [[fit["slope"], fit["intercept"], fit["r2"], int(fit["degenerate"]), int(fit["partial"])]],
    )
    plot_scale(rows, fit["slope"], fit["intercept"], outdir / "scaling.png")
    return rows, fit


def pipeline_line_protocol(cfg: ExperimentConfig):
    """Adapter: the full pipeline as a 2-means protocol on [0, 1] points."""

    def proto(x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        pts = PointSet(x.reshape(-1, 1), cfg.lam)
        run_cfg = cfg.pipeline_config()
        res = weighted_centers(pts, run_cfg, seed=int(rng.integers(0, 2**63 - 1)))
        return res.final.centers.reshape(-1)

    return proto


def cmd_lb(
    cfg: ExperimentConfig,
    outdir: Path,
    oblivious_trials: int = 10_000,
    pipeline_trials: int = 10,
    pipeline_tau_factors=(16.0,),
) -> dict:
    outdir.mkdir(parents=True, exist_ok=True)
    rng = derive_rng(cfg.seed, "lb")
    obl_rows = floor_experiment(
        [cfg.n], oblivious_protocol, oblivious_trials, rng, tau_factors=(1.0,), p=cfg.p
    )
    pipe_rows = floor_experiment(
        [cfg.n], pipeline_line_protocol(cfg), pipeline_trials, rng,
        tau_factors=pipeline_tau_factors, p=cfg.p,
    )
    header = ["n", "tau", "instance", "decision_error_rate", "mean_cost", "ci95", "cost_floor", "floor_violations"]
    write_csv(
        outdir / "lb_oblivious.csv", header,
        [[r[h] for h in header] for r in obl_rows],
    )
    write_csv(
        outdir / "lb_pipeline.csv", header,
        [[r[h] for h in header] for r in pipe_rows],
    )
    plot_lb(obl_rows + pipe_rows, outdir / "lb.png")
    return {"oblivious": obl_rows, "pipeline": pipe_rows}


def cmd_audit_dp(outpath: Path | None, samples: int = 10**6, seed: int = 2026) -> tuple[list[AuditResult], bool]:
    results: list[AuditResult] = []
    eps_grid = (0.1, 0.5, 1.0, 2.0)
    for eps in eps_grid:
        for bins in (2, 4, 8, 16):
            results.append(audit_unary(bins, eps))
    delta = 1e-6
    rng = derive_rng(seed, "audit-dp")
    for eps in eps_grid:
        sigma = gaussian_sigma(1.0, eps, delta)
        results.append(
            audit_gaussian(f"sum_reporter[eps={eps:g}]", sigma, 2.0, eps, delta, samples, rng)
        )
        # Region-average block reporter: charged eps/2, sensitivity sqrt(2)*diam.
        sig_avg = avg_sigma(1.0, eps, delta)
        results.append(
            audit_gaussian(
                f"avg_reporter[eps={eps:g}]", sig_avg, math.sqrt(2.0), eps / 2.0, delta, samples, rng
            )
        )
    all_pass = all(r.passed for r in results)
    if outpath is not None:
        write_csv(
            outpath,
            ["name", "kind", "epsilon", "delta", "max_ratio", "exceed_rate", "exceed_allowed", "passed"],
            [
                [r.name, r.kind, r.epsilon, r.delta, r.max_ratio, r.exceed_rate, r.exceed_allowed, int(r.passed)]
                for r in results
            ],
        )
    return results, all_pass


def cmd_selftest() -> list[tuple[str, bool, str]]:
    """Fast internal consistency battery; returns (name, passed, note) rows."""
    from .frequency import UnaryScheme, run_histogram, aggregate_stream
    from .transcript import Transcript
    import tempfile

    checks: list[tuple[str, bool, str]] = []

    r = audit_unary(8, 1.0)
    checks.append(("dp_ratio_unary", r.passed, f"max_ratio={r.max_ratio:.6f}"))

    rng = derive_rng(1, "selftest", "hist")
    ts = Transcript()
    est = run_histogram(
        np.zeros(10000, dtype=np.int64), np.arange(10000), UnaryScheme(4, 1.0), 0.1,
        rng, ts, 1, "t", mode="pooled",
    )
    ok = abs(est.estimates[0] - 10000) <= est.err
    checks.append(("histogram_bound", bool(ok), f"err={est.estimates[0]-10000:.1f} bound={est.err:.1f}"))

    with tempfile.TemporaryDirectory() as td:
        path = Path(td) / "t.bin"
        ts.write(path)
        est2 = aggregate_stream(read_transcript(path).stream(1, "t"))
        checks.append(
            ("transcript_replay", bool(np.array_equal(est.estimates, est2.estimates)), "bit-identical")
        )

    from .lsh import build_relaxed, estimate_collision, base_collision_prob
    spec = build_relaxed(4, 0.1, 0.6, 0.2)
    p_hat, lo, hi = estimate_collision(spec, spec.r, 10**4, derive_rng(2, "selftest", "lsh"))
    analytic = base_collision_prob(spec.r, spec.width)
    checks.append(("lsh_closed_form", bool(lo - 0.02 <= analytic <= hi + 0.02), f"p_hat={p_hat:.3f} analytic={analytic:.3f}"))

    from .geometry import opt_oracle as oo, PointSet as PS
    pts = PS(np.array([[0.0], [0.0], [1.0]]), 1.0)
    _, c = oo(pts, 1, 2, np.array([[0.0], [1 / 3], [1.0]]))
    checks.append(("oracle_exact", bool(abs(c - 2 / 3) < 1e-12), f"cost={c:.6f}"))

    wps = WeightedPointSet(np.array([[0.0], [1.0]]), np.array([2.0, 1.0]))
    res = solve(wps, 1, 2, SolverConfig(), seed=3)
    checks.append(("solver_fixed_point", bool(abs(res.cost - 2 / 3) < 1e-9), f"cost={res.cost:.6f}"))
    return checks
