"""Experiment configuration: a plain-text key=value format with sections.

The file format is deliberately trivial (diff-friendly, language-agnostic):

    [experiment]
    n = 65536
    epsilon = 2.0
    ...

parse(emit(config)) round-trips exactly.  Unknown sections or keys are hard
errors so typos fail loudly.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .datagen import GeneratorSpec
from .pipeline import PipelineConfig
from .solver import SolverConfig


@dataclass
class ExperimentConfig:
    # [experiment]
    n: int = 4096
    d: int = 4
    k: int = 3
    lam: float = 1.0
    p: int = 2
    epsilon: float = 1.0
    delta: float = 1e-6
    beta: float = 0.1
    seed: int = 1
    mode: str = "desk"
    outdir: str = "out"
    # [exponents]
    a: float = 0.2
    b: float = 0.1
    # [constants]
    t_const: float = 1.0
    theta_const: float = 1.0
    theta_logs: bool | None = None
    ratio_cap: float = 1.0
    # [desk]
    t_override: float | None = None
    reps: int | None = None
    bins: int = 4096
    lsh_p: float = 0.85
    lsh_q: float = 0.3
    lsh_k: int = 1
    radius_j_min: int | None = None
    radius_j_max: int | None = None
    noise_off: bool = False
    report_mode: str = "auto"
    # [solver]
    solver_method: str = "kmeanspp_lloyd"
    solver_restarts: int = 8
    solver_max_iters: int = 100
    solver_tol: float = 1e-9
    # [generator]
    gen_components: int = 3
    gen_sigma: float = 0.05
    gen_separation: float = 10.0
    gen_background: float = 0.0
    gen_small_coeff: float = 0.0
    gen_small_exponent: float = 0.55
    gen_small_sigma: float = 0.002

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(
            k=self.k,
            p=self.p,
            eps=self.epsilon,
            delta=self.delta,
            beta=self.beta,
            mode=self.mode,
            a=self.a,
            b=self.b,
            t_const=self.t_const,
            theta_const=self.theta_const,
            theta_logs=self.theta_logs,
            t_override=self.t_override,
            reps=self.reps,
            bins=self.bins,
            lsh_p=self.lsh_p,
            lsh_q=self.lsh_q,
            lsh_K=self.lsh_k,
            radius_j_min=self.radius_j_min,
            radius_j_max=self.radius_j_max,
            solver=self.solver_config(),
            noise_off=self.noise_off,
            report_mode=self.report_mode,
        )

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            method=self.solver_method,
            restarts=self.solver_restarts,
            max_iters=self.solver_max_iters,
            tol=self.solver_tol,
        )

    def generator_spec(self) -> GeneratorSpec:
        return GeneratorSpec(
            components=self.gen_components,
            sigma=self.gen_sigma,
            separation=self.gen_separation,
            background_fraction=self.gen_background,
            small_cluster_coeff=self.gen_small_coeff,
            small_cluster_exponent=self.gen_small_exponent,
            small_cluster_sigma=self.gen_small_sigma,
        )


# (section, key in file, attribute, type tag)
_LAYOUT = [
    ("experiment", "n", "n", "int"),
    ("experiment", "d", "d", "int"),
    ("experiment", "k", "k", "int"),
    ("experiment", "lambda", "lam", "float"),
    ("experiment", "p", "p", "int"),
    ("experiment", "epsilon", "epsilon", "float"),
    ("experiment", "delta", "delta", "float"),
    ("experiment", "beta", "beta", "float"),
    ("experiment", "seed", "seed", "int"),
    ("experiment", "mode", "mode", "str"),
    ("experiment", "outdir", "outdir", "str"),
    ("exponents", "a", "a", "float"),
    ("exponents", "b", "b", "float"),
    ("constants", "t_const", "t_const", "float"),
    ("constants", "theta_const", "theta_const", "float"),
    ("constants", "theta_logs", "theta_logs", "opt_bool"),
    ("constants", "ratio_cap", "ratio_cap", "float"),
    ("desk", "t", "t_override", "opt_float"),
    ("desk", "reps", "reps", "opt_int"),
    ("desk", "bins", "bins", "int"),
    ("desk", "lsh_p", "lsh_p", "float"),
    ("desk", "lsh_q", "lsh_q", "float"),
    ("desk", "lsh_k", "lsh_k", "int"),
    ("desk", "radius_j_min", "radius_j_min", "opt_int"),
    ("desk", "radius_j_max", "radius_j_max", "opt_int"),
    ("desk", "noise_off", "noise_off", "bool"),
    ("desk", "report_mode", "report_mode", "str"),
    ("solver", "method", "solver_method", "str"),
    ("solver", "restarts", "solver_restarts", "int"),
    ("solver", "max_iters", "solver_max_iters", "int"),
    ("solver", "tol", "solver_tol", "float"),
    ("generator", "components", "gen_components", "int"),
    ("generator", "sigma", "gen_sigma", "float"),
    ("generator", "separation", "gen_separation", "float"),
    ("generator", "background_fraction", "gen_background", "float"),
    ("generator", "small_cluster_coeff", "gen_small_coeff", "float"),
    ("generator", "small_cluster_exponent", "gen_small_exponent", "float"),
    ("generator", "small_cluster_sigma", "gen_small_sigma", "float"),
]


def _format_value(value, kind: str) -> str:
    if value is None:
        return "none"
    if kind in ("bool", "opt_bool"):
        return "true" if value else "false"
    if kind in ("float", "opt_float"):
        return repr(float(value))
    return str(value)


def _parse_value(text: str, kind: str):
    text = text.strip()
    if kind.startswith("opt_") and text.lower() == "none":
        return None
    base = kind.removeprefix("opt_")
    if base == "int":
        return int(text)
    if base == "float":
        return float(text)
    if base == "bool":
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"bad boolean {text!r}")
    return text


def emit_config(cfg: ExperimentConfig) -> str:
    lines = []
    current = None
    for section, key, attr, kind in _LAYOUT:
        if section != current:
            if current is not None:
                lines.append("")
            lines.append(f"[{section}]")
            current = section
        lines.append(f"{key} = {_format_value(getattr(cfg, attr), kind)}")
    return "\n".join(lines) + "\n"


def parse_config(text: str) -> ExperimentConfig:
    lookup = {(s, k): (attr, kind) for s, k, attr, kind in _LAYOUT}
    cfg = ExperimentConfig()
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in {s for s, *_ in _LAYOUT}:
                raise ValueError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if section is None or (section, key) not in lookup:
            raise ValueError(f"line {lineno}: unknown key {key!r} in section {section!r}")
        attr, kind = lookup[(section, key)]
        setattr(cfg, attr, _parse_value(value, kind))
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def save_config(cfg: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(emit_config(cfg), encoding="utf-8")


def apply_overrides(cfg: ExperimentConfig, pairs: list[str]) -> ExperimentConfig:
    """Apply section.key=value strings (CLI --set) onto a config."""
    lookup = {f"{s}.{k}": (attr, kind) for s, k, attr, kind in _LAYOUT}
    for pair in pairs:
        if "=" not in pair:
            raise ValueError(f"override {pair!r} must look like section.key=value")
        key, value = pair.split("=", 1)
        key = key.strip()
        if key not in lookup:
            raise ValueError(f"unknown override key {key!r}")
        attr, kind = lookup[key]
        setattr(cfg, attr, _parse_value(value, kind))
    return cfg
