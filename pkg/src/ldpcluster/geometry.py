"""Core geometric types, cost objectives, and brute-force oracles.

The cost objectives are the sum over points (optionally weighted) of the
distance to the nearest center, raised to p in {1, 2}.  The exhaustive
`opt_oracle` is the ground-truth reference used by tests: it searches every
size-k subset of a finite candidate pool and is intentionally independent of
the vectorized `cost` path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np

from .errors import RefusalError

NORM_TOL = 1e-9
ORACLE_BUDGET = 10**6


def _as_matrix(points, dim: int | None = None) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1) if dim in (None, 1) else pts.reshape(1, -1)
    if pts.ndim != 2:
        raise ValueError(f"points must be a 2-D array, got shape {pts.shape}")
    return pts


@dataclass(frozen=True)
class PointSet:
    """Immutable set of points inside the ball of radius `radius_bound`."""

    points: np.ndarray
    radius_bound: float

    def __post_init__(self):
        pts = _as_matrix(self.points)
        object.__setattr__(self, "points", pts)
        pts.setflags(write=False)
        if self.radius_bound <= 0:
            raise ValueError("radius_bound must be positive")
        norms = np.linalg.norm(pts, axis=1)
        if pts.size and norms.max() > self.radius_bound * (1 + NORM_TOL):
            raise ValueError(
                f"point norm {norms.max():.6g} exceeds radius bound {self.radius_bound:.6g}"
            )

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class WeightedPointSet:
    """Points with real weights; negative weights are clamped to 0."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = _as_matrix(self.points)
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if w.shape[0] != pts.shape[0]:
            raise ValueError("weights length must match number of points")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        w = np.maximum(w, 0.0)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        pts.setflags(write=False)
        w.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def total_weight(self) -> float:
        return float(np.sum(self.weights))


@dataclass(frozen=True)
class CenterSet:
    centers: np.ndarray

    def __post_init__(self):
        c = _as_matrix(self.centers)
        if c.shape[0] < 1:
            raise ValueError("center set must be non-empty")
        object.__setattr__(self, "centers", c)
        c.setflags(write=False)

    @property
    def k(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]


@dataclass(frozen=True)
class OrthonormalBasis:
    """Rows are the basis vectors."""

    vectors: np.ndarray

    def __post_init__(self):
        v = _as_matrix(self.vectors)
        if v.shape[0] != v.shape[1]:
            raise ValueError("basis must be square")
        gram = v @ v.T
        if not np.allclose(gram, np.eye(v.shape[0]), atol=1e-9):
            raise ValueError("basis is not orthonormal within 1e-9")
        object.__setattr__(self, "vectors", v)
        v.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    def project(self, points: np.ndarray) -> np.ndarray:
        return _as_matrix(points) @ self.vectors.T


def _check_dims(points_dim: int, centers: CenterSet):
    if centers.dim != points_dim:
        raise ValueError(
            f"dimension mismatch: points are {points_dim}-dimensional, "
            f"centers are {centers.dim}-dimensional"
        )


def nearest_center(points: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-point index of the nearest center (ties to the lowest index) and distance."""
    pts = _as_matrix(points)
    cs = _as_matrix(centers)
    # (n, k) squared distances; computed blockwise to bound memory.
    n = pts.shape[0]
    idx = np.empty(n, dtype=np.int64)
    dist = np.empty(n, dtype=np.float64)
    block = max(1, int(2**22 / max(1, cs.shape[0])))
    for lo in range(0, n, block):
        hi = min(n, lo + block)
        d2 = ((pts[lo:hi, None, :] - cs[None, :, :]) ** 2).sum(axis=2)
        idx[lo:hi] = np.argmin(d2, axis=1)
        dist[lo:hi] = np.sqrt(d2[np.arange(hi - lo), idx[lo:hi]])
    return idx, dist


def cost(data: PointSet | WeightedPointSet, centers: CenterSet, p: int) -> float:
    """Clustering cost: sum over points of weight * (distance to nearest center)^p."""
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    _check_dims(data.dim, centers)
    _, dist = nearest_center(data.points, centers.centers)
    contrib = dist if p == 1 else dist**2
    if isinstance(data, WeightedPointSet):
        contrib = contrib * data.weights
    return float(np.sum(contrib))


def _cost_slow(points: np.ndarray, weights, subset: np.ndarray, p: int) -> float:
    # Independent reference path: per-point python loop with fsum accumulation.
    terms = []
    for i in range(points.shape[0]):
        best = math.inf
        for c in subset:
            d = math.dist(points[i], c)
            if d < best:
                best = d
        w = 1.0 if weights is None else float(weights[i])
        terms.append(w * best**p)
    return math.fsum(terms)


def opt_oracle(
    data: PointSet | WeightedPointSet, k: int, p: int, candidate_pool
) -> tuple[CenterSet, float]:
    """Exhaustively optimal k centers drawn from a finite pool.

    Ties break toward the lexicographically smallest tuple of pool indices.
    Refuses when the search space exceeds ORACLE_BUDGET subsets.
    """
    pool = _as_matrix(candidate_pool, dim=data.dim)
    if pool.shape[1] != data.dim:
        raise ValueError("candidate pool dimension mismatch")
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > pool.shape[0]:
        raise ValueError("k exceeds pool size")
    total = math.comb(pool.shape[0], k)
    if total > ORACLE_BUDGET:
        raise RefusalError(
            "POOL_TOO_LARGE",
            f"{pool.shape[0]} choose {k} = {total} exceeds the {ORACLE_BUDGET} subset budget",
            {"subsets": total, "budget": ORACLE_BUDGET},
        )
    weights = data.weights if isinstance(data, WeightedPointSet) else None
    best_cost = math.inf
    best_subset = None
    for combo in combinations(range(pool.shape[0]), k):
        c = _cost_slow(data.points, weights, pool[list(combo)], p)
        if c < best_cost:
            best_cost = c
            best_subset = combo
    assert best_subset is not None
    return CenterSet(pool[list(best_subset)]), float(best_cost)


def random_basis(d: int, rng: np.random.Generator) -> OrthonormalBasis:
    """Haar-distributed orthonormal basis via QR with sign-fixed diagonal."""
    if d < 1:
        raise ValueError("d must be >= 1")
    g = rng.standard_normal((d, d))
    q, r = np.linalg.qr(g)
    q = q * np.sign(np.diag(r))
    return OrthonormalBasis(q.T)


def enclosing_count(points: PointSet, center, radius: float) -> int:
    """Exact number of points within Euclidean distance `radius` of `center`."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    c = np.asarray(center, dtype=np.float64).reshape(-1)
    if c.shape[0] != points.dim:
        raise ValueError("center dimension mismatch")
    d = np.linalg.norm(points.points - c[None, :], axis=1)
    return int(np.count_nonzero(d <= radius))


def rotation_outlier_bound(d: int, m: int, beta: float) -> float:
    """Per-pair projection bound 2*sqrt(ln(d*m/beta)/d) used by the rotation check."""
    return 2.0 * math.sqrt(math.log(d * m / beta) / d)


# ---------------------------------------------------------------------------
# Point file I/O.  Native format: first line "n d Lambda", then n rows of d
# space-separated floats.  A CSV variant with a header row is also accepted.
# ---------------------------------------------------------------------------


def save_points(path: str | Path, points: PointSet) -> None:
    path = Path(path)
    with path.open("w", encoding="ascii", newline="\n") as fh:
        fh.write(f"{points.n} {points.dim} {points.radius_bound:.17g}\n")
        for row in points.points:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def load_points(path: str | Path) -> PointSet:
    path = Path(path)
    text = path.read_text(encoding="ascii").strip().splitlines()
    if not text:
        raise ValueError(f"empty point file: {path}")
    first = text[0].strip()
    if "," in first:
        return _load_points_csv(text)
    head = first.split()
    if len(head) != 3:
        raise ValueError("point file header must be 'n d Lambda'")
    n, d = int(head[0]), int(head[1])
    lam = float(head[2])
    rows = [ln.split() for ln in text[1 : n + 1]]
    if len(rows) != n:
        raise ValueError(f"expected {n} point rows, found {len(rows)}")
    pts = np.array([[float(v) for v in row] for row in rows], dtype=np.float64)
    if pts.shape != (n, d):
        raise ValueError("point rows do not match declared dimensions")
    return PointSet(pts, lam)


def _load_points_csv(lines: list[str]) -> PointSet:
    header = [h.strip() for h in lines[0].split(",")]
    if header[0].lower().startswith("x") or header[0].lower() == "dim0":
        data_lines = lines[1:]
    else:
        data_lines = lines
    pts = np.array(
        [[float(v) for v in ln.split(",")] for ln in data_lines if ln.strip()],
        dtype=np.float64,
    )
    lam = float(np.max(np.linalg.norm(pts, axis=1))) if pts.size else 1.0
    return PointSet(pts, max(lam, 1e-12))
