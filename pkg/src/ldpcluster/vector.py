"""Locally private vector sums and per-region averages.

`gaussian_sum` is the basic primitive: every user reports their point plus
i.i.d. per-coordinate Gaussian noise calibrated to sensitivity 2*Lambda at
(eps, delta); the server sums the reports.

`ldp_avg` estimates, for a public partition of space into regions, the
average of the points inside every region.  Each user sends one noisy block
per region (their own block carries their point, encoded relative to the
region anchor so the report sensitivity is bounded by the region diameter),
plus one histogram report used to estimate region counts.  The count
histogram gets half the epsilon and the noise blocks the other half.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .frequency import UnaryScheme, run_histogram
from .transcript import Transcript, pack_array


def gaussian_sigma(lam: float, eps: float, delta: float) -> float:
    """Noise scale for the sum primitive: sensitivity 2*Lambda at (eps, delta)."""
    if delta <= 0:
        raise ValueError("the Gaussian mechanism requires delta > 0")
    return 2.0 * lam * math.sqrt(2.0 * math.log(1.25 / delta)) / eps


def sum_error_bound(n: int, d: int, lam: float, eps: float, delta: float, beta: float) -> float:
    """High-probability bound on ||estimate - true sum|| for gaussian_sum."""
    return 2.0 * lam * math.sqrt(n * d) * math.log(2.0 / (beta * delta)) / eps


def gaussian_sum(
    points: np.ndarray,
    lam: float,
    eps: float,
    delta: float,
    rng: np.random.Generator,
    noise_off: bool = False,
    transcript: Transcript | None = None,
    round_id: int = 1,
    tag: str = "gaussian_sum",
    mode: str = "auto",
) -> np.ndarray:
    """Noisy estimate of the coordinate-wise sum of `points`."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2:
        raise ValueError("points must be (n, d)")
    n, d = pts.shape
    sigma = 0.0 if noise_off else gaussian_sigma(lam, eps, delta)
    if transcript is None:
        transcript = Transcript()
    if mode == "auto":
        mode = "per_user" if n * d <= (1 << 21) else "pooled"
    meta = {
        "kind": "vecsum",
        "shape": [1, d],
        "n_users": n,
        "sigma": sigma,
        "mode": mode,
    }
    stream = transcript.new_stream(round_id, tag, meta)
    if mode == "per_user":
        noise = rng.standard_normal((n, d)) * sigma if sigma > 0 else np.zeros((n, d))
        reports = pts + noise
        for i in range(n):
            stream.add_report(i, pack_array(reports[i].reshape(1, d)))
    else:
        total = pts.sum(axis=0)
        if sigma > 0:
            total = total + rng.standard_normal(d) * sigma * math.sqrt(n)
        stream.set_pooled(pack_array(total.reshape(1, d)))
    return stream.vector_sum().reshape(d)


@dataclass
class RegionPartition:
    """Disjoint regions with known diameters and anchor points.

    `membership` maps an (n, d) array to per-point region indices, -1 for
    points outside every region.  `descriptor` carries a serializable
    account of each region (used in transcripts and audits).
    """

    diameters: np.ndarray
    anchors: np.ndarray
    membership: Callable[[np.ndarray], np.ndarray]
    descriptor: list[dict]

    def __post_init__(self):
        self.diameters = np.asarray(self.diameters, dtype=np.float64)
        self.anchors = np.asarray(self.anchors, dtype=np.float64)
        if self.diameters.ndim != 1 or self.anchors.ndim != 2:
            raise ValueError("diameters must be (T,), anchors (T, d)")
        if self.diameters.shape[0] != self.anchors.shape[0]:
            raise ValueError("diameters and anchors disagree on region count")
        if self.diameters.shape[0] == 0:
            raise ValueError("partition must contain at least one region")
        if np.any(self.diameters <= 0):
            raise ValueError("region diameters must be positive")

    @property
    def count(self) -> int:
        return self.diameters.shape[0]


@dataclass(frozen=True)
class RegionAverage:
    region: int
    mean: np.ndarray
    count_est: float
    reliable: bool


def avg_sigma(diam: float, eps: float, delta: float) -> float:
    """Per-coordinate noise scale for one region block."""
    if delta <= 0:
        raise ValueError("the Gaussian mechanism requires delta > 0")
    return 8.0 * diam * math.sqrt(math.log(1.25 / delta)) / eps


def avg_count_floor(n: int, T: int, eps: float, beta: float) -> float:
    """Minimum true region count for the average bound to apply."""
    return (12.0 / eps) * math.sqrt(n * math.log(4.0 * T / beta))


def avg_error_bound(
    n: int, d: int, T: int, diam: float, eps: float, delta: float, beta: float, r_t: float
) -> float:
    """High-probability bound on the region-average error at true count r_t."""
    return 36.0 * math.sqrt(d * n) * math.log(8.0 * d * T / (beta * delta)) * diam / (eps * r_t)


def ldp_avg(
    points: np.ndarray,
    partition: RegionPartition,
    eps: float,
    delta: float,
    beta: float,
    rng: np.random.Generator,
    noise_off: bool = False,
    transcript: Transcript | None = None,
    round_id: int = 1,
    tag: str = "ldp_avg",
    mode: str = "auto",
    min_count: float = 0.0,
) -> list[RegionAverage]:
    """Estimate per-region averages; regions with nonpositive estimated count
    (or below `min_count`) are flagged unreliable and must be ignored."""
    pts = np.asarray(points, dtype=np.float64)
    n, d = pts.shape
    T = partition.count
    region_idx = np.asarray(partition.membership(pts), dtype=np.int64)
    if region_idx.shape[0] != n:
        raise ValueError("membership must assign every point")

    if transcript is None:
        transcript = Transcript()
    if mode == "auto":
        mode = "per_user" if n * T * d <= (1 << 21) else "pooled"

    sigmas = np.array(
        [0.0 if noise_off else avg_sigma(float(dm), eps, delta) for dm in partition.diameters]
    )
    meta = {
        "kind": "vecsum",
        "shape": [T, d],
        "n_users": n,
        "sigma": [float(s) for s in sigmas],
        "mode": mode,
        "anchored": True,
    }
    stream = transcript.new_stream(round_id, f"{tag}/vectors", meta)

    offsets = pts - np.where(region_idx[:, None] >= 0, partition.anchors[region_idx], 0.0)
    if mode == "per_user":
        for i in range(n):
            block = rng.standard_normal((T, d)) * sigmas[:, None]
            t = region_idx[i]
            if t >= 0:
                block[t] += offsets[i]
            stream.add_report(i, pack_array(block))
    else:
        total = np.zeros((T, d))
        for t in range(T):
            sel = region_idx == t
            if np.any(sel):
                total[t] = offsets[sel].sum(axis=0)
            if sigmas[t] > 0:
                total[t] += rng.standard_normal(d) * sigmas[t] * math.sqrt(n)
        stream.set_pooled(pack_array(total))
    block_sums = stream.vector_sum()

    # Count histogram at eps/2 over the region indices (identity codec).
    scheme = UnaryScheme(bins=T, epsilon=eps / 2.0, noise_off=noise_off)
    est = run_histogram(
        region_idx,
        np.arange(n),
        scheme,
        beta,
        rng,
        transcript,
        round_id,
        f"{tag}/counts",
        mode=mode if mode == "pooled" else "per_user",
    )

    out = []
    for t in range(T):
        r_hat = float(est.estimates[t])
        reliable = r_hat > max(0.0, min_count)
        if reliable:
            mean = partition.anchors[t] + block_sums[t] / r_hat
        else:
            mean = partition.anchors[t].copy()
        out.append(RegionAverage(region=t, mean=mean, count_est=r_hat, reliable=reliable))
    return out
