"""End-to-end locally private clustering pipeline.

Phases (communication rounds in parentheses):

1. Radius sweep (rounds 1-4): boosted candidate discovery at every radius of
   the halving grid Lambda, Lambda/2, ..., Lambda/n, run in parallel across
   radii; each per-radius run gets an equal slice of a quarter of epsilon.
2. Creation-aware assignment (no communication): every user is assigned to
   the center they created at their smallest creating radius, unless some
   center from a strictly smaller radius is closer; users who created
   nothing fall back to their globally nearest candidate.
3. Initial weights (round 5): histogram of assignments at eps/4.
4. Filtering: candidates below the weight threshold are dropped; users
   re-assign to their nearest kept candidate.
5. Final weights (round 6): fresh histogram of the re-assignment at eps/4.
6. Output: a non-private solver picks k centers from the kept weighted
   candidates.

The total privacy charge is at most (3/4 eps, delta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .budget import BudgetLedger, PrivacyBudget
from .boosted_pass import BoostConfig, BoostOutput, boosted_pass
from .errors import RefusalError
from .frequency import UnaryScheme, run_histogram
from .geometry import CenterSet, WeightedPointSet, cost as geo_cost, PointSet
from .lsh import LshSpec, build_family, build_relaxed
from .seeds import derive_rng
from .solver import SolverConfig, solve, local_search
from .transcript import Transcript


@dataclass
class PipelineConfig:
    k: int
    p: int = 2
    eps: float = 1.0
    delta: float = 1e-6
    beta: float = 0.1
    mode: str = "desk"  # "desk" or "theory"
    a: float = 0.2
    b: float = 0.1
    # Explicit constants (theory defaults follow the stated formulas).
    t_const: float = 1.0
    theta_const: float = 1.0
    theta_logs: bool | None = None  # None: logs included in theory mode only
    # Desk-mode knobs.
    t_override: float | None = None
    reps: int | None = None
    bins: int = 1 << 12
    lsh_p: float = 0.85
    lsh_q: float = 0.3
    lsh_K: int = 1
    radius_j_min: int | None = None  # truncate the halving grid (desk only)
    radius_j_max: int | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    noise_off: bool = False
    report_mode: str = "auto"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.p not in (1, 2):
            raise ValueError("p must be 1 or 2")
        if self.mode not in ("desk", "theory"):
            raise ValueError("mode must be 'desk' or 'theory'")
        if not (self.a > self.b > 0):
            raise ValueError("exponents must satisfy a > b > 0")


@dataclass(frozen=True)
class CandidateInfo:
    cid: tuple[int, int, int]  # (radius index, repetition, hash value)
    center: np.ndarray
    radius: float
    radius_index: int

    @property
    def label(self) -> str:
        j, m, u = self.cid
        return f"r{j}/m{m}/u{u}"


@dataclass
class PipelineResult:
    final: CenterSet
    candidates: list[CandidateInfo]
    kept: list[int]  # indices into candidates
    weights_initial: np.ndarray  # estimated, per candidate
    weights_final: np.ndarray  # estimated, per kept index
    theta: float
    assign_initial: np.ndarray  # per user -> candidate index
    assign_final: np.ndarray  # per user -> index into kept
    created_at: np.ndarray  # per user -> candidate index of the smallest-radius creation, or -1
    transcript: Transcript
    ledger: BudgetLedger
    sweep: dict[int, BoostOutput]
    radii: dict[int, float]
    audit: dict = field(default_factory=dict)

    @property
    def rounds(self) -> int:
        return self.transcript.round_count

    def kept_centers(self) -> np.ndarray:
        return np.stack([self.candidates[i].center for i in self.kept])


def radius_grid(n: int, lam: float) -> dict[int, float]:
    """Halving grid: index j holds lam / 2^j, down to lam / n."""
    if n < 2:
        raise RefusalError("N_TOO_SMALL", "need at least 2 users for the radius grid")
    levels = math.ceil(math.log2(n))
    grid = {j: lam / (2.0**j) for j in range(levels + 1)}
    if min(grid.values()) <= 0 or not math.isfinite(min(grid.values())):
        raise RefusalError("GRID_UNDERFLOW", "lam/n underflows float resolution")
    return grid


def theory_t(n: int, d: int, cfg: PipelineConfig) -> float:
    levels = math.ceil(math.log2(n))
    return (
        cfg.t_const
        / cfg.eps
        * n ** (0.5 + cfg.a + cfg.b)
        * math.sqrt(d)
        * math.log(max(levels, 2) / cfg.beta)
        * math.log(d * n / (cfg.beta * cfg.delta))
    )


def desk_t(n: int, d: int, cfg: PipelineConfig) -> float:
    return cfg.t_override if cfg.t_override is not None else max(64.0, cfg.t_const * n / (4.0 * cfg.k))


def weight_threshold(n: int, d: int, cfg: PipelineConfig) -> float:
    """Filtering threshold on estimated candidate weights."""
    logs = cfg.theta_logs if cfg.theta_logs is not None else (cfg.mode == "theory")
    base = cfg.theta_const * (math.sqrt(d) / cfg.eps) * n ** (0.5 + cfg.a)
    if logs:
        base *= math.log(1.0 / cfg.beta) * math.log(d * n / cfg.delta)
    return base


def radius_sweep(
    points: np.ndarray,
    lam: float,
    cfg: PipelineConfig,
    rng: np.random.Generator,
    transcript: Transcript,
    ledger: BudgetLedger,
    instrument: bool = False,
) -> tuple[dict[int, BoostOutput], dict[int, float], dict[int, LshSpec]]:
    """Run the boosted pass at every grid radius, eps/(4R) and delta/R each."""
    n, d = points.shape
    grid = radius_grid(n, lam)
    j_lo = 0 if cfg.radius_j_min is None else max(0, cfg.radius_j_min)
    j_hi = max(grid) if cfg.radius_j_max is None else min(max(grid), cfg.radius_j_max)
    if cfg.mode == "theory":
        j_lo, j_hi = 0, max(grid)  # theory mode runs the full grid
    js = [j for j in sorted(grid) if j_lo <= j <= j_hi]
    if not js:
        raise RefusalError("EMPTY_GRID", "radius truncation removed every grid level")
    R = len(js)
    eps_run = cfg.eps / (4.0 * R)
    delta_run = cfg.delta / R
    # Ledger charges as exact rationals so R slices recompose to eps/4 exactly.
    eps_step = Fraction(cfg.eps) / (16 * R)
    delta_step = Fraction(cfg.delta) / R
    t = theory_t(n, d, cfg) if cfg.mode == "theory" else desk_t(n, d, cfg)

    sweep: dict[int, BoostOutput] = {}
    specs: dict[int, LshSpec] = {}
    for j in js:
        r = grid[j]
        if cfg.mode == "theory":
            spec = build_family(d, n, r, cfg.a, cfg.b)
            boost_cfg = BoostConfig(
                reps=None, bins=cfg.bins, noise_off=cfg.noise_off, mode=cfg.report_mode,
                theory_checks=True, t_const=cfg.t_const,
            )
        else:
            spec = build_relaxed(d, r, cfg.lsh_p, cfg.lsh_q, cfg.lsh_K)
            boost_cfg = BoostConfig(
                reps=cfg.reps or 2, bins=cfg.bins, noise_off=cfg.noise_off,
                mode=cfg.report_mode, theory_checks=False,
            )
        specs[j] = spec
        sweep[j] = boosted_pass(
            points, spec, r, t, cfg.beta / R, eps_run, delta_run, lam, boost_cfg,
            derive_rng(int(rng.integers(0, 2**63 - 1)), "sweep", j),
            transcript=transcript, round_base=1, tag_prefix=f"r{j}",
            ledger=None, instrument=instrument,
        )
        reps = sweep[j].reps
        for step in ("heavy", "locate", "average", "validate"):
            dlt = delta_step if step == "average" else 0
            ledger.charge(f"r{j}/{step}[x{reps} disjoint]", eps_step, dlt)
    return sweep, {j: grid[j] for j in js}, specs


def collect_candidates(sweep: dict[int, BoostOutput], radii: dict[int, float]) -> list[CandidateInfo]:
    out: list[CandidateInfo] = []
    for j in sorted(sweep):
        centers = sweep[j].centers()
        for (m, u) in sorted(centers):
            out.append(
                CandidateInfo(
                    cid=(j, m, u), center=centers[(m, u)], radius=radii[j], radius_index=j
                )
            )
    return out


def creation_table(
    points: np.ndarray, sweep: dict[int, BoostOutput], candidates: list[CandidateInfo]
) -> np.ndarray:
    """Per (user, radius level) index into `candidates` of the created center, or -1.

    A user creates a center when they sit in the repetition that emitted it,
    hash to its value, and lie within its capture radius; at most one center
    per radius.  Computable from the public outputs plus the user's point.
    """
    n = points.shape[0]
    js = sorted(sweep)
    index_of = {c.cid: i for i, c in enumerate(candidates)}
    table = np.full((n, len(js)), -1, dtype=np.int64)
    for col, j in enumerate(js):
        boost = sweep[j]
        for m, idx in enumerate(boost.partition):
            p_out = boost.passes[m]
            if not p_out.heavy:
                continue
            created = p_out.creations(points[idx])
            has = created >= 0
            for local_i in np.nonzero(has)[0]:
                cid = (j, m, int(created[local_i]))
                if cid in index_of:  # trimmed candidates create nothing
                    table[idx[local_i], col] = index_of[cid]
    return table


def assign_a(
    points: np.ndarray, candidates: list[CandidateInfo], table: np.ndarray, js: list[int]
) -> tuple[np.ndarray, np.ndarray]:
    """Creation-aware assignment.  Returns (assignment, created_at)."""
    n = points.shape[0]
    centers = np.stack([c.center for c in candidates])
    assign = np.full(n, -1, dtype=np.int64)
    created_at = np.full(n, -1, dtype=np.int64)

    # Smallest creating radius = last grid column with a creation.
    has = table >= 0
    any_creation = has.any(axis=1)
    last_col = np.where(any_creation, table.shape[1] - 1 - np.argmax(has[:, ::-1], axis=1), -1)
    rows = np.nonzero(any_creation)[0]
    created_at[rows] = table[rows, last_col[rows]]

    # Candidates are ordered by radius level; suffix slices hold all centers
    # of strictly smaller radii.
    level_of = np.array([c.radius_index for c in candidates])
    col_of_level = {j: col for col, j in enumerate(js)}
    suffix_start = np.searchsorted(level_of, np.array(js), side="right")

    for col, j in enumerate(js):
        sel = rows[last_col[rows] == col]
        if sel.size == 0:
            continue
        own = created_at[sel]
        start = suffix_start[col]
        if start >= len(candidates):
            assign[sel] = own
            continue
        sub = centers[start:]
        d2 = ((points[sel][:, None, :] - sub[None, :, :]) ** 2).sum(axis=2)
        near = np.argmin(d2, axis=1)
        d_near = np.sqrt(d2[np.arange(sel.size), near])
        d_own = np.linalg.norm(points[sel] - centers[own], axis=1)
        use_near = d_near < d_own
        assign[sel] = np.where(use_near, near + start, own)

    # Fallback: users who created nothing join their globally nearest candidate.
    rest = np.nonzero(~any_creation)[0]
    if rest.size:
        d2 = ((points[rest][:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assign[rest] = np.argmin(d2, axis=1)
    return assign, created_at


def assign_b(points: np.ndarray, assign: np.ndarray, kept: list[int], centers: np.ndarray) -> np.ndarray:
    """Re-assignment onto the kept candidates: keep a(i) when it survived,
    else the nearest kept center (ties to the lowest kept index)."""
    kept_pos = {c: i for i, c in enumerate(kept)}
    out = np.empty(points.shape[0], dtype=np.int64)
    direct = np.array([kept_pos.get(int(a), -1) for a in assign], dtype=np.int64)
    out[:] = direct
    miss = np.nonzero(direct < 0)[0]
    if miss.size:
        sub = centers[kept]
        d2 = ((points[miss][:, None, :] - sub[None, :, :]) ** 2).sum(axis=2)
        out[miss] = np.argmin(d2, axis=1)
    return out


def weighted_centers(
    points_set: PointSet,
    cfg: PipelineConfig,
    seed: int,
    instrument: bool = False,
) -> PipelineResult:
    """Full pipeline on a point set; spends at most (3/4 eps, delta)."""
    points = points_set.points
    lam = points_set.radius_bound
    n, d = points.shape
    rng = derive_rng(seed, "pipeline")
    transcript = Transcript()
    ledger = BudgetLedger(noise_off=cfg.noise_off)

    sweep, radii, specs = radius_sweep(
        points, lam, cfg, rng, transcript, ledger, instrument=instrument
    )
    js = sorted(radii)
    candidates = collect_candidates(sweep, radii)
    if not candidates:
        raise RefusalError(
            "NO_CANDIDATES",
            "no hash value survived candidate discovery at any radius",
            {"radii": len(js)},
        )
    centers = np.stack([c.center for c in candidates])

    table = creation_table(points, sweep, candidates)
    assign, created_at = assign_a(points, candidates, table, js)

    # Round 5: initial weights.
    scheme = UnaryScheme(len(candidates), cfg.eps / 4.0, cfg.noise_off)
    est_a = run_histogram(
        assign, np.arange(n), scheme, cfg.beta, rng, transcript, 5, "weights/initial",
        mode=cfg.report_mode,
    )
    ledger.charge("weights/initial", Fraction(cfg.eps) / 4)
    weights_initial = est_a.estimates.copy()

    theta = weight_threshold(n, d, cfg)
    kept = [i for i in range(len(candidates)) if weights_initial[i] >= theta]
    if not kept:
        raise RefusalError(
            "W_EMPTY",
            f"no candidate weight reached the threshold {theta:.4g}",
            {"theta": theta, "max_weight": float(weights_initial.max())},
        )

    assign_final = assign_b(points, assign, kept, centers)

    # Round 6: re-estimated weights over the kept candidates.
    scheme_b = UnaryScheme(len(kept), cfg.eps / 4.0, cfg.noise_off)
    est_b = run_histogram(
        assign_final, np.arange(n), scheme_b, cfg.beta, rng, transcript, 6, "weights/final",
        mode=cfg.report_mode,
    )
    ledger.charge("weights/final", Fraction(cfg.eps) / 4)
    weights_final = est_b.estimates.copy()

    positive = np.maximum(weights_final, 0.0)
    if positive.sum() <= 0:
        raise RefusalError("NO_POSITIVE_WEIGHTS", "all re-estimated weights are nonpositive")
    weighted = WeightedPointSet(centers[kept], positive)
    res = solve(weighted, cfg.k, cfg.p, cfg.solver, seed=derive_seed_for(seed))

    result = PipelineResult(
        final=res.centers,
        candidates=candidates,
        kept=kept,
        weights_initial=weights_initial,
        weights_final=weights_final,
        theta=theta,
        assign_initial=assign,
        assign_final=assign_final,
        created_at=created_at,
        transcript=transcript,
        ledger=ledger,
        sweep=sweep,
        radii=radii,
    )
    if instrument:
        result.audit = instrumented_claims_audit(result, points_set, cfg, seed)
    return result


def derive_seed_for(seed: int) -> int:
    return int(derive_rng(seed, "solver-seed").integers(0, 2**63 - 1))


def budget_check(result: PipelineResult, cfg: PipelineConfig) -> bool:
    configured = PrivacyBudget(cfg.eps, cfg.delta)
    return result.ledger.within(configured)


def instrumented_claims_audit(
    result: PipelineResult, points_set: PointSet, cfg: PipelineConfig, seed: int
) -> dict:
    """Server-side audit of the run against the utility chain it relies on.

    Reports, for the realized run: the distance from every candidate to the
    kept set in units of its creation radius; the cost of the best k-subset
    of the kept candidates against a non-private baseline; the total
    re-assignment displacement; proxy-vs-true cost comparisons on random
    center sets; and the two-sided accuracy of the final weight estimates.
    """
    points = points_set.points
    lam = points_set.radius_bound
    p = cfg.p
    audit: dict = {}
    centers = np.stack([c.center for c in result.candidates])
    kept_centers = centers[result.kept]
    kept_set = set(result.kept)

    # (i) distance from each candidate to the kept set, over its radius.
    ratios = {}
    for i, cand in enumerate(result.candidates):
        dmin = float(np.min(np.linalg.norm(kept_centers - cand.center[None, :], axis=1)))
        ratios[cand.label] = dmin / cand.radius
    deleted = [c.label for i, c in enumerate(result.candidates) if i not in kept_set]
    audit["candidate_to_kept_ratio"] = ratios
    audit["deleted_max_ratio"] = max((ratios[l] for l in deleted), default=0.0)

    # (ii) best k-subset of the kept candidates, evaluated on the true data.
    w_all = np.ones(points.shape[0])
    sub_centers, sub_cost = local_search(
        points, w_all, min(cfg.k, len(result.kept)), p,
        derive_rng(seed, "audit", "subset"), support=kept_centers,
    )
    audit["kept_subset_cost"] = float(sub_cost)

    # (iii) total displacement of the final assignment.
    b_centers = kept_centers[result.assign_final]
    disp = np.linalg.norm(points - b_centers, axis=1)
    audit["assignment_cost"] = float(np.sum(disp if p == 1 else disp**2))

    # (iv) proxy-vs-true cost on random center sets.
    b_true = np.bincount(result.assign_final, minlength=len(result.kept)).astype(float)
    proxy = WeightedPointSet(kept_centers, b_true)
    rng = derive_rng(seed, "audit", "proxy")
    rows = []
    for _ in range(20):
        raw = rng.standard_normal((cfg.k, points.shape[1]))
        radii_draw = rng.uniform(0, lam, size=cfg.k) ** (1.0)
        D = raw / np.linalg.norm(raw, axis=1, keepdims=True) * radii_draw[:, None]
        cs = CenterSet(D)
        c_s = geo_cost(points_set, cs, p)
        c_b = geo_cost(proxy, cs, p)
        rows.append((c_s, c_b))
    audit["proxy_cost_pairs"] = rows
    audit["proxy_over_true"] = max((cb - 2.0 * cs) for cs, cb in rows)
    audit["true_over_proxy"] = max((cs - 2.0 * cb) for cs, cb in rows)

    # (v) two-sided accuracy of the final weight estimates.
    ok = {}
    for pos, i in enumerate(result.kept):
        bt = b_true[pos]
        bh = result.weights_final[pos]
        ok[result.candidates[i].label] = bool(bt > 0 and 0.5 * bt <= bh <= 2.0 * bt)
    audit["weight_ratio_ok"] = ok
    audit["weight_ratio_all_ok"] = all(ok.values()) if ok else False
    audit["b_true"] = b_true
    return audit
