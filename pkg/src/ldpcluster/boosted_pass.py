"""Boosted candidate discovery: repeat the single-radius pass on a random
partition of the users so a dense cluster is captured with probability
1 - beta instead of merely a noticeable one.

Users are shuffled once and cut into M contiguous blocks (sizes within one
of each other), each block running its own pass with target t / (2M) and
failure budget beta / (7M).  Disjoint blocks compose in parallel, so one
boosted run spends (eps, delta) once, not M times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .budget import BudgetLedger
from .cluster_pass import PassOutput, PassParams, cluster_pass
from .errors import RefusalError
from .lsh import LshSpec
from .transcript import Transcript


@dataclass
class BoostConfig:
    """Knobs of the boosted run; desk mode overrides reps and t directly."""

    reps: int | None = None  # None: M = ceil(4 n^a ln(1/beta)) from the family exponents
    bins: int = 1 << 16
    noise_off: bool = False
    mode: str = "auto"
    theory_checks: bool = True
    t_const: float = 1.0  # multiplier on the theory-mode minimum t
    union_cap_const: float = 128.0  # union cap = const * M * n / (t * floor)


@dataclass
class BoostOutput:
    partition: list[np.ndarray]  # global user indices per repetition
    passes: list[PassOutput]
    reps: int
    union_cap: int
    trimmed: list[tuple[int, int]] = field(default_factory=list)

    def centers(self) -> dict[tuple[int, int], np.ndarray]:
        """Mapping (repetition, hash value) -> center, after union trimming."""
        out = {}
        trimmed = set(self.trimmed)
        for m, p in enumerate(self.passes):
            for u in p.heavy:
                if (m, u) not in trimmed:
                    out[(m, u)] = p.centers[u]
        return out

    def csv_rows(self) -> tuple[list[str], list[list]]:
        """Tabular form: rep, hash value, center coordinates, surviving flag."""
        d = self.passes[0].centers[self.passes[0].heavy[0]].shape[0] if any(
            p.heavy for p in self.passes
        ) else 0
        if d == 0:
            for p in self.passes:
                if p.heavy_initial and p.boxes:
                    d = next(iter(p.boxes.values())).lo.shape[0]
                    break
        header = ["m", "u", *[f"x{i}" for i in range(d)], "surviving"]
        trimmed = set(self.trimmed)
        rows = []
        for m, p in enumerate(self.passes):
            for u in sorted(p.heavy_initial):
                if u in p.centers and (m, u) not in trimmed:
                    rows.append([m, u, *[float(v) for v in p.centers[u]], 1])
                elif u in p.audit.get("centers_raw", {}):
                    rows.append([m, u, *[float(v) for v in p.audit["centers_raw"][u]], 0])
        return header, rows


def required_t(
    n: int, d: int, eps: float, delta: float, beta: float, a: float, b: float, t_const: float
) -> float:
    """Theory-mode floor on the target cluster size."""
    return (
        t_const
        * n ** (0.5 + a + b)
        * math.sqrt(d)
        / eps
        * math.log(1.0 / beta)
        * math.log(d * n / (beta * delta))
    )


def reps_for(n: int, a: float, beta: float) -> int:
    return max(1, math.ceil(4.0 * n**a * math.log(1.0 / beta)))


def boosted_pass(
    points: np.ndarray,
    spec: LshSpec,
    r: float,
    t: float,
    beta: float,
    eps: float,
    delta: float,
    lam: float,
    cfg: BoostConfig,
    rng: np.random.Generator,
    transcript: Transcript | None = None,
    round_base: int = 1,
    tag_prefix: str = "boost",
    ledger: BudgetLedger | None = None,
    instrument: bool = False,
) -> BoostOutput:
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    d = points.shape[1]
    if transcript is None:
        transcript = Transcript()

    if cfg.reps is not None:
        reps = int(cfg.reps)
    else:
        if math.isnan(spec.a):
            raise ValueError("repetition count requires family exponents or an explicit override")
        reps = reps_for(n, spec.a, beta)
    if reps < 1 or reps > n:
        raise RefusalError("BAD_REPS", f"repetition count {reps} outside [1, n]")

    if cfg.theory_checks and spec.mode == "theory":
        t_min = required_t(n, d, eps, delta, beta, spec.a, spec.b, cfg.t_const)
        t_split = 24.0 * reps * math.log(math.e * reps / beta)
        t_floor = max(t_min, t_split)
        if t < t_floor:
            raise RefusalError(
                "T_TOO_SMALL",
                f"t={t:.4g} below the theory-mode floor {t_floor:.4g}",
                {"t": t, "min_feasible_t": t_floor},
            )

    floor = spec.p_target  # n^-b in theory mode, the configured target in desk mode

    perm = rng.permutation(n)
    base, rem = divmod(n, reps)
    partition: list[np.ndarray] = []
    start = 0
    for m in range(reps):
        size = base + (1 if m < rem else 0)
        partition.append(np.sort(perm[start : start + size]))
        start += size

    t_hat = t / (2.0 * reps)
    beta_hat = beta / (7.0 * reps)
    passes: list[PassOutput] = []
    for m, idx in enumerate(partition):
        params = PassParams(
            r=r,
            t=t_hat,
            beta=beta_hat,
            eps=eps,
            delta=delta,
            lam=lam,
            collision_floor=floor,
            bins=cfg.bins,
            noise_off=cfg.noise_off,
            mode=cfg.mode,
        )
        passes.append(
            cluster_pass(
                points[idx],
                idx,
                spec,
                params,
                rng,
                transcript=transcript,
                round_base=round_base,
                tag_prefix=f"{tag_prefix}/m{m}",
                ledger=None,
                instrument=instrument,
            )
        )
    if ledger is not None:
        # Disjoint user blocks: one parallel charge covers all repetitions.
        for step in ("heavy", "locate", "average", "validate"):
            dlt = delta if step == "average" else 0
            ledger.charge(f"{tag_prefix}/{step}[x{reps} disjoint]", eps / 4.0, dlt)

    union_cap = max(1, math.floor(cfg.union_cap_const * reps * n / max(t * floor, 1e-300)))
    emitted = [(m, u) for m, p in enumerate(passes) for u in p.heavy]
    trimmed: list[tuple[int, int]] = []
    if len(emitted) > union_cap:
        scored = sorted(
            emitted,
            key=lambda mu: (-passes[mu[0]].audit.get("v_est", {}).get(mu[1], 0.0), mu),
        )
        trimmed = sorted(scored[union_cap:])
    return BoostOutput(
        partition=partition, passes=passes, reps=reps, union_cap=union_cap, trimmed=trimmed
    )
