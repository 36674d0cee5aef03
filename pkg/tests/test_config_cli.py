import json
from pathlib import Path

import pytest

from ldpcluster.cli import main
from ldpcluster.config import ExperimentConfig, apply_overrides, emit_config, parse_config


def test_config_round_trip_defaults():
    cfg = ExperimentConfig()
    assert parse_config(emit_config(cfg)) == cfg


def test_config_round_trip_modified():
    cfg = ExperimentConfig(
        n=2**16, d=8, epsilon=2.0, t_override=431.5, reps=3, radius_j_min=2,
        radius_j_max=9, noise_off=True, theta_logs=False, gen_small_coeff=1.25,
    )
    assert parse_config(emit_config(cfg)) == cfg


def test_unknown_key_rejected():
    with pytest.raises(ValueError):
        parse_config("[experiment]\nbogus = 1\n")
    with pytest.raises(ValueError):
        parse_config("[nosuch]\nn = 1\n")


def test_overrides():
    cfg = ExperimentConfig()
    apply_overrides(cfg, ["experiment.n=128", "desk.t=55.5", "generator.sigma=0.2"])
    assert cfg.n == 128 and cfg.t_override == 55.5 and cfg.gen_sigma == 0.2
    with pytest.raises(ValueError):
        apply_overrides(cfg, ["nope.nope=1"])


def _common_args(tmp_path, outdir="run"):
    return [
        "--n", "256", "--d", "2", "--k", "2", "--seed", "9",
        "--epsilon", "8", "--delta", "0.01",
        "--outdir", str(tmp_path / outdir),
        "--set", "desk.t=32", "--set", "desk.bins=512",
        "--set", "constants.theta_const=0.02", "--set", "generator.sigma=0.0",
        "--set", "generator.components=2",
        "--set", "generator.separation=500000000.0",
    ]


def test_cli_gen_run_eval_cycle(tmp_path, capsys):
    pts = tmp_path / "pts.txt"
    rc = main(["gen", "--points", str(pts), *_common_args(tmp_path)])
    assert rc == 0
    rc = main(["run", "--points", str(pts), *_common_args(tmp_path)])
    assert rc == 0
    out = capsys.readouterr().out.strip().splitlines()
    info = json.loads(out[-1])
    assert info["rounds"] <= 7
    assert info["within_budget"] is True
    artifact = tmp_path / "run"
    for name in ("transcript.bin", "ledger.csv", "candidates.csv", "centers.csv",
                 "run_info.json", "run.png", "audit.csv", "config.txt", "pass_audit.csv"):
        assert (artifact / name).exists(), name
    from ldpcluster.transcript import read_transcript

    assert read_transcript(artifact / "transcript.bin").round_count <= 7
    rc = main(["eval", "--artifact", str(artifact), "--points", str(pts),
               *_common_args(tmp_path)])
    assert rc == 0
    metrics = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert metrics["cost_private"] >= 0.0
    assert "additive_residual" in metrics
    assert (artifact / "metrics.csv").exists()
    assert (artifact / "eval.png").exists()


def test_cli_eval_hash_mismatch_refused(tmp_path, capsys):
    pts = tmp_path / "pts.txt"
    main(["gen", "--points", str(pts), *_common_args(tmp_path)])
    main(["run", "--points", str(pts), *_common_args(tmp_path)])
    other = tmp_path / "other.txt"
    main(["gen", "--points", str(other), "--seed", "10", *_common_args(tmp_path)[2:]])
    rc = main(["eval", "--artifact", str(tmp_path / "run"), "--points", str(other),
               *_common_args(tmp_path)])
    assert rc == 2


def test_cli_refusal_exit_code(tmp_path):
    pts = tmp_path / "pts.txt"
    main(["gen", "--points", str(pts), *_common_args(tmp_path)])
    rc = main(["run", "--points", str(pts), *_common_args(tmp_path),
               "--set", "constants.theta_const=1e9"])  # W_EMPTY refusal
    assert rc == 2
    assert (tmp_path / "run" / "refusal.json").exists()


def test_cli_selftest(tmp_path, capsys):
    rc = main(["selftest", "--outdir", str(tmp_path / "st")])
    out = capsys.readouterr().out
    assert rc == 0, out
    assert "PASS dp_ratio_unary" in out


def test_run_outputs_byte_stable(tmp_path):
    pts = tmp_path / "pts.txt"
    main(["gen", "--points", str(pts), *_common_args(tmp_path)])
    main(["run", "--points", str(pts), *_common_args(tmp_path, outdir="r1")])
    main(["run", "--points", str(pts), *_common_args(tmp_path, outdir="r2")])
    for name in ("ledger.csv", "candidates.csv", "centers.csv", "transcript.bin", "audit.csv"):
        assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes(), name


def test_cli_audit_dp_small(tmp_path, capsys):
    rc = main(["audit-dp", "--samples", "20000", "--outdir", str(tmp_path / "a")])
    assert rc == 0
    assert (tmp_path / "a" / "audit_dp.csv").exists()


def test_scale_refuses_tiny_grid(tmp_path):
    rc = main(["scale", "--n-grid", "256,512", "--seeds", "1",
               "--outdir", str(tmp_path / "s")])
    assert rc == 2


def test_scale_degenerate_flat_residuals_flagged(tmp_path):
    # Noise-free runs on identical-point groups: residuals collapse to ~0,
    # the fit degenerates, and the report flags slope NaN.
    import math
    from ldpcluster.config import ExperimentConfig
    from ldpcluster.runner import cmd_scale

    cfg = ExperimentConfig(
        n=256, d=2, k=2, p=2, epsilon=8.0, delta=0.01, beta=0.1, seed=3, mode="desk",
        reps=2, bins=512, t_override=24.0, theta_const=0.02, noise_off=True,
        gen_components=2, gen_sigma=0.0, gen_separation=5e8,
        solver_restarts=4,
    )
    rows, fit = cmd_scale(cfg, [128, 256, 512, 1024], seeds=2, outdir=tmp_path / "s")
    assert fit["degenerate"]
    assert math.isnan(fit["slope"])
    assert (tmp_path / "s" / "scaling.csv").exists()
    assert (tmp_path / "s" / "scaling_fit.csv").exists()
    assert (tmp_path / "s" / "scaling.png").exists()


def test_lb_command_writes_reports(tmp_path):
    from ldpcluster.config import ExperimentConfig
    from ldpcluster.runner import cmd_lb

    cfg = ExperimentConfig(
        n=512, d=1, k=2, p=2, epsilon=96.0, delta=0.05, beta=0.1, seed=4, mode="desk",
        reps=1, bins=512, radius_j_min=9, radius_j_max=9, t_override=480.0,
        theta_const=0.5, theta_logs=False, solver_restarts=4,
    )
    out = cmd_lb(cfg, tmp_path / "lb", oblivious_trials=400, pipeline_trials=2)
    assert (tmp_path / "lb" / "lb_oblivious.csv").exists()
    assert (tmp_path / "lb" / "lb_pipeline.csv").exists()
    assert (tmp_path / "lb" / "lb.png").exists()
    header = (tmp_path / "lb" / "lb_pipeline.csv").read_text().splitlines()[0]
    assert header == "n,tau,instance,decision_error_rate,mean_cost,ci95,cost_floor,floor_violations"
