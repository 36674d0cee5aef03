"""Single-radius private candidate discovery.

One pass over a (distributed) point set with a fixed target radius r:

  round 1  hash every point with a locality-sensitive function and find the
           heavy hash values through the frequency oracle (eps/4);
  round 2  rotate space with a random orthonormal basis, split users into d
           groups, and locate per-axis intervals holding each heavy value's
           mass (eps/4), growing them into candidate boxes;
  round 3  privately average the points of each heavy value inside its box
           (eps/4, all of delta);
  round 4  estimate how many points sit within the capture radius of each
           averaged center and delete the ones with too few (eps/4).

The pass succeeds for a dense radius-r cluster only with noticeable
probability; the caller boosts it by repetition.  All thresholds scale with
t * collision_floor, where collision_floor is the family's near-collision
rate (n^-b in theory mode, the configured target in desk mode).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .budget import BudgetLedger
from .errors import RefusalError
from .frequency import DomainCodec, UnaryScheme, run_histogram
from .geometry import OrthonormalBasis, random_basis
from .lsh import LshFunction, LshSpec, sample_hash
from .transcript import Transcript
from .vector import RegionPartition, ldp_avg


@dataclass(frozen=True)
class IntervalGrid:
    """Contiguous intervals of fixed length covering [-2L, 2L] (last truncated)."""

    length: float
    low: float
    high: float
    count: int

    @classmethod
    def build(cls, length: float, lam: float) -> "IntervalGrid":
        if length <= 0:
            raise ValueError("interval length must be positive")
        span = 4.0 * lam
        count = max(1, math.ceil(span / length))
        return cls(length=length, low=-2.0 * lam, high=2.0 * lam, count=count)

    def index_of(self, values: np.ndarray) -> np.ndarray:
        idx = np.floor((np.asarray(values) - self.low) / self.length).astype(np.int64)
        return np.clip(idx, 0, self.count - 1)

    def bounds(self, index: int) -> tuple[float, float]:
        lo = self.low + index * self.length
        return lo, min(lo + self.length, self.high)


@dataclass(frozen=True)
class CandidateBox:
    """Axis-aligned box in the rotated coordinates, one interval per axis
    grown by one interval length to each side."""

    lo: np.ndarray  # (d,)
    hi: np.ndarray  # (d,)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))

    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def contains(self, projected: np.ndarray) -> np.ndarray:
        return np.all((projected >= self.lo) & (projected <= self.hi), axis=1)


@dataclass
class PassParams:
    r: float
    t: float
    beta: float
    eps: float
    delta: float
    lam: float
    collision_floor: float
    bins: int = 1 << 16
    include_const: float = 16.0
    member_const: float = 32.0
    survive_const: float = 4.0
    heavy_cap_const: float = 32.0
    noise_off: bool = False
    mode: str = "auto"

    def __post_init__(self):
        if self.t <= 0 or self.beta <= 0 or self.beta >= 1:
            raise ValueError("need t > 0 and beta in (0, 1)")
        if self.r <= 0 or self.lam <= 0:
            raise ValueError("need positive radius and ball bound")
        if not 0 < self.collision_floor <= 1:
            raise ValueError("collision_floor must be in (0, 1]")

    @property
    def threshold_unit(self) -> float:
        return self.t * self.collision_floor


@dataclass
class PassOutput:
    centers: dict[int, np.ndarray]
    heavy: list[int]
    heavy_initial: list[int]
    hash_fn: LshFunction
    bin_codec: DomainCodec
    basis: OrthonormalBasis
    grid: IntervalGrid
    boxes: dict[int, CandidateBox]
    capture_radius: float
    params: PassParams
    audit: dict = field(default_factory=dict)

    def user_bins(self, points: np.ndarray) -> np.ndarray:
        return self.bin_codec.bin_of(self.hash_fn.evaluate(points))

    def creations(self, points: np.ndarray) -> np.ndarray:
        """Per-point created hash value (surviving bin within the capture
        radius of its center), or -1.  Computable from public outputs."""
        bins = self.user_bins(points)
        created = np.full(points.shape[0], -1, dtype=np.int64)
        for u in self.heavy:
            sel = bins == u
            if not np.any(sel):
                continue
            close = (
                np.linalg.norm(points[sel] - self.centers[u][None, :], axis=1)
                <= self.capture_radius
            )
            idx = np.nonzero(sel)[0][close]
            created[idx] = u
        return created


def heavy_values(
    user_bins: np.ndarray,
    user_ids: np.ndarray,
    params: PassParams,
    rng: np.random.Generator,
    transcript: Transcript,
    round_id: int,
    tag: str,
    codec: DomainCodec,
):
    """Round-1 heavy-value list: estimate ≥ midway between the inclusion and
    membership thresholds, trimmed to the size cap by descending estimate."""
    scheme = UnaryScheme(codec.bins, params.eps / 4.0, params.noise_off)
    est = run_histogram(
        user_bins, user_ids, scheme, params.beta / 7.0, rng, transcript, round_id, tag,
        codec=codec, mode=params.mode,
    )
    unit = params.threshold_unit
    detect = 0.5 * (unit / params.include_const + unit / params.member_const)
    order = np.lexsort((np.arange(codec.bins), -est.estimates))
    cap = max(1, math.floor(params.heavy_cap_const * len(user_bins) / max(unit, 1e-300)))
    heavy = [int(u) for u in order if est.estimates[u] >= detect][:cap]
    return sorted(heavy), est


def localize_boxes(
    points: np.ndarray,
    user_bins: np.ndarray,
    user_ids: np.ndarray,
    heavy: list[int],
    basis: OrthonormalBasis,
    grid: IntervalGrid,
    params: PassParams,
    rng: np.random.Generator,
    transcript: Transcript,
    round_id: int,
    tag_prefix: str,
) -> dict[int, CandidateBox]:
    """Round-2 per-axis localization of each heavy value's mass.

    Users are split into d near-equal groups by shuffled round-robin; group i
    reports (interval of <x, z_i>, hash value) through the frequency oracle.
    The per-axis argmax interval (ties to the lower index) grows by one
    interval length each side.
    """
    n, d = points.shape
    if not heavy:
        return {}
    projected = basis.project(points)
    perm = rng.permutation(n)
    part = np.empty(n, dtype=np.int64)
    part[perm] = np.arange(n) % d

    # The per-axis domain is (interval, heavy value): the heavy list is
    # public after round 1, so users holding a non-heavy value report the
    # null item.  This keeps the domain small enough that the transport
    # binning is usually the identity (no spurious argmax collisions).
    rank_of = {u: i for i, u in enumerate(heavy)}
    ranks = np.full(user_bins.shape[0], -1, dtype=np.int64)
    for u, i in rank_of.items():
        ranks[user_bins == u] = i
    domain_size = grid.count * len(heavy)
    argmax_iv = np.zeros((d, len(heavy)), dtype=np.int64)
    for i in range(d):
        sel = part == i
        codes = np.where(
            ranks[sel] >= 0, grid.index_of(projected[sel, i]) * len(heavy) + ranks[sel], -1
        )
        codec = DomainCodec.build(domain_size, params.bins, rng)
        scheme = UnaryScheme(codec.bins, params.eps / 4.0, params.noise_off)
        binned = np.where(codes >= 0, codec.bin_of(np.maximum(codes, 0)), -1)
        est = run_histogram(
            binned, user_ids[sel], scheme, params.beta / 7.0, rng, transcript,
            round_id, f"{tag_prefix}/axis{i}", codec=codec, mode=params.mode,
        )
        query = (
            np.arange(grid.count, dtype=np.int64)[:, None] * len(heavy)
            + np.arange(len(heavy), dtype=np.int64)[None, :]
        )
        table = est.query(query)  # (count, |heavy|)
        argmax_iv[i] = np.argmax(table, axis=0)  # argmax ties -> lower interval

    boxes: dict[int, CandidateBox] = {}
    for col, u in enumerate(heavy):
        lo = np.empty(d)
        hi = np.empty(d)
        for i in range(d):
            b_lo, b_hi = grid.bounds(int(argmax_iv[i, col]))
            lo[i] = b_lo - grid.length
            hi[i] = b_hi + grid.length
        boxes[u] = CandidateBox(lo=lo, hi=hi)
    return boxes


def validate_and_emit(
    points: np.ndarray,
    user_bins: np.ndarray,
    user_ids: np.ndarray,
    heavy: list[int],
    boxes: dict[int, CandidateBox],
    basis: OrthonormalBasis,
    capture_radius: float,
    params: PassParams,
    rng: np.random.Generator,
    transcript: Transcript,
    round_id: int,
    tag_prefix: str,
    instrument: bool,
) -> tuple[dict[int, np.ndarray], list[int], dict]:
    """Rounds 3-4: private box averages, then deletion of low-support values."""
    n, d = points.shape
    projected = basis.project(points)
    audit: dict = {}
    if not heavy:
        return {}, [], audit

    # Region diameter: the box intersected with the data ball, so very wide
    # boxes never inflate the noise beyond the ball diameter.
    anchors = np.stack([basis.vectors.T @ boxes[u].center() for u in heavy])
    diams = np.array(
        [max(min(boxes[u].diameter, 2.0 * params.lam), 1e-12 * params.lam) for u in heavy]
    )

    member_idx = np.full(n, -1, dtype=np.int64)
    for pos, u in enumerate(heavy):
        sel = (user_bins == u) & boxes[u].contains(projected)
        member_idx[sel] = pos

    partition = RegionPartition(
        diameters=diams,
        anchors=anchors,
        membership=lambda pts, mi=member_idx: mi,
        descriptor=[
            {"hash_value": int(u), "lo": boxes[u].lo.tolist(), "hi": boxes[u].hi.tolist()}
            for u in heavy
        ],
    )
    averages = ldp_avg(
        points,
        partition,
        params.eps / 4.0,
        params.delta,
        params.beta / 7.0,
        rng,
        noise_off=params.noise_off,
        transcript=transcript,
        round_id=round_id,
        tag=f"{tag_prefix}/avg",
        mode=params.mode,
    )

    centers_raw: dict[int, np.ndarray] = {}
    reliable: dict[int, bool] = {}
    for pos, u in enumerate(heavy):
        avg = averages[pos]
        vec = avg.mean
        norm = np.linalg.norm(vec)
        if norm > params.lam:  # points live in B(0, lam); project the estimate back
            vec = vec * (params.lam / norm)
        centers_raw[u] = vec
        reliable[u] = avg.reliable

    # Round 4: count points near each center, delete weak values.
    items = np.full(n, -1, dtype=np.int64)
    v_true = np.zeros(len(heavy))
    for pos, u in enumerate(heavy):
        sel = user_bins == u
        close = sel & (np.linalg.norm(points - centers_raw[u][None, :], axis=1) <= capture_radius)
        items[close] = pos
        v_true[pos] = np.count_nonzero(close)
    scheme = UnaryScheme(len(heavy), params.eps / 4.0, params.noise_off)
    est = run_histogram(
        items, user_ids, scheme, params.beta / 7.0, rng, transcript,
        round_id + 1, f"{tag_prefix}/validate", mode=params.mode,
    )
    survive_thr = params.threshold_unit / params.survive_const
    survivors = [
        u
        for pos, u in enumerate(heavy)
        if reliable[u] and est.estimates[pos] > survive_thr
    ]
    centers = {u: centers_raw[u] for u in survivors}

    # Public per-value quantities, kept for deterministic downstream ordering.
    audit["v_est"] = {int(u): float(est.estimates[pos]) for pos, u in enumerate(heavy)}
    audit["reliable"] = {int(u): bool(reliable[u]) for u in heavy}
    if instrument:
        audit["v_true"] = {int(u): float(v_true[pos]) for pos, u in enumerate(heavy)}
        audit["centers_raw"] = {int(u): centers_raw[u].copy() for u in heavy}
        audit["exact_means"] = {}
        for pos, u in enumerate(heavy):
            sel = member_idx == pos
            if np.any(sel):
                audit["exact_means"][int(u)] = points[sel].mean(axis=0)
    return centers, survivors, audit


def cluster_pass(
    points: np.ndarray,
    user_ids: np.ndarray,
    spec: LshSpec,
    params: PassParams,
    rng: np.random.Generator,
    transcript: Transcript | None = None,
    round_base: int = 1,
    tag_prefix: str = "pass",
    ledger: BudgetLedger | None = None,
    instrument: bool = False,
) -> PassOutput:
    """Run the full four-round pass on one user group."""
    points = np.asarray(points, dtype=np.float64)
    n, d = points.shape
    if n == 0:
        raise ValueError("empty point set")
    if params.lam / params.r > max(float(n), 2.0) ** 3:
        raise RefusalError(
            "RADIUS_TOO_SMALL",
            f"lam/r = {params.lam / params.r:.3g} exceeds the poly(n) guard n^3",
            {"lam_over_r": params.lam / params.r, "limit": float(n) ** 3},
        )
    if transcript is None:
        transcript = Transcript()
    user_ids = np.asarray(user_ids, dtype=np.int64)

    # Round 1: hash and find heavy values.
    hash_fn = sample_hash(spec, rng)
    bin_codec = DomainCodec.build(spec.universe, params.bins, rng)
    transcript.broadcast(round_base, f"{tag_prefix}/hash", hash_fn.serialize())
    user_bins = bin_codec.bin_of(hash_fn.evaluate(points))
    heavy_init, heavy_est = heavy_values(
        user_bins, user_ids, params, rng, transcript, round_base, f"{tag_prefix}/heavy", bin_codec
    )

    # Round 2: rotate, grid, localize.
    basis = random_basis(d, rng)
    p_len = 2.0 * params.r * spec.c * math.sqrt(math.log(d * n / params.beta) / d)
    grid = IntervalGrid.build(p_len, params.lam)
    transcript.broadcast(
        round_base + 1,
        f"{tag_prefix}/frame",
        np.ascontiguousarray(basis.vectors).tobytes()
        + np.array([p_len, grid.count], dtype=np.float64).tobytes(),
    )
    boxes = localize_boxes(
        points, user_bins, user_ids, heavy_init, basis, grid, params, rng,
        transcript, round_base + 1, tag_prefix,
    )

    # Rounds 3-4: average and validate.
    capture_radius = 5.0 * spec.c * params.r
    centers, survivors, audit = validate_and_emit(
        points, user_bins, user_ids, heavy_init, boxes, basis, capture_radius,
        params, rng, transcript, round_base + 2, tag_prefix, instrument,
    )

    if ledger is not None:
        for step in ("heavy", "locate", "average", "validate"):
            dlt = params.delta if step == "average" else 0
            ledger.charge(f"{tag_prefix}/{step}", params.eps / 4.0, dlt)

    if instrument:
        true_counts = np.bincount(user_bins, minlength=bin_codec.bins)
        audit["true_counts"] = {int(u): int(true_counts[u]) for u in heavy_init}
        audit["heavy_estimates"] = {int(u): float(heavy_est.estimates[u]) for u in heavy_init}
        audit["bin_diameters"] = _bin_diameters(points, user_bins, heavy_init)

    return PassOutput(
        centers=centers,
        heavy=survivors,
        heavy_initial=heavy_init,
        hash_fn=hash_fn,
        bin_codec=bin_codec,
        basis=basis,
        grid=grid,
        boxes={u: boxes[u] for u in heavy_init},
        capture_radius=capture_radius,
        params=params,
        audit=audit,
    )


def _bin_diameters(points, user_bins, heavy, sample_cap: int = 512):
    out = {}
    for u in heavy:
        members = points[user_bins == u]
        if members.shape[0] < 2:
            out[int(u)] = 0.0
            continue
        if members.shape[0] > sample_cap:
            members = members[:: members.shape[0] // sample_cap + 1]
        d2 = ((members[:, None, :] - members[None, :, :]) ** 2).sum(axis=2)
        out[int(u)] = float(np.sqrt(d2.max()))
    return out
