"""Non-private O(1)-approximate weighted k-means / k-median solvers.

Two methods:

* ``kmeanspp_lloyd`` (default): D^p-weighted seeding followed by weighted
  Lloyd iterations (mean step for p=2, Weiszfeld geometric-median step for
  p=1).  Fast, expected O(log k)-competitive seeding, not a worst-case
  certificate.
* ``local_search``: best-improvement single swaps over the support of the
  weighted set.  A swap-optimal solution on a finite support carries the
  classical constant-factor guarantees (5x for p=1, 25x for p=2 against the
  best same-support subset), so this is the method used in guarantee-bearing
  checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CenterSet, WeightedPointSet
from .seeds import derive_rng


@dataclass(frozen=True)
class SolverConfig:
    method: str = "kmeanspp_lloyd"
    restarts: int = 8
    max_iters: int = 100
    tol: float = 1e-9

    def __post_init__(self):
        if self.method not in ("kmeanspp_lloyd", "local_search"):
            raise ValueError(f"unknown solver method {self.method!r}")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be positive")


@dataclass(frozen=True)
class SolveResult:
    centers: CenterSet
    cost: float
    degenerate: bool
    method: str
    iterations: int = 0


def weighted_cost(points: np.ndarray, weights: np.ndarray, centers: np.ndarray, p: int) -> float:
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    dmin = np.sqrt(d2.min(axis=1))
    return float(np.sum(weights * (dmin if p == 1 else dmin**2)))


def weiszfeld(
    points: np.ndarray,
    weights: np.ndarray,
    iters: int = 50,
    tol: float = 1e-9,
    perturb: float = 1e-12,
) -> np.ndarray:
    """Weighted geometric median; iterates from the weighted mean."""
    w = np.asarray(weights, dtype=np.float64)
    total = w.sum()
    if total <= 0:
        raise ValueError("weights must have positive total")
    y = (points * w[:, None]).sum(axis=0) / total
    scale = max(1e-30, float(np.abs(points).max()))
    for _ in range(iters):
        diff = points - y[None, :]
        dist = np.linalg.norm(diff, axis=1)
        coincide = dist < perturb
        if np.any(coincide):
            y = y + perturb  # nudge off the data point so the weights stay finite
            diff = points - y[None, :]
            dist = np.linalg.norm(diff, axis=1)
        inv = w / np.maximum(dist, 1e-300)
        y_new = (points * inv[:, None]).sum(axis=0) / inv.sum()
        if np.linalg.norm(y_new - y) <= tol * scale:
            y = y_new
            break
        y = y_new
    return y


def _center_of(points, weights, p):
    if p == 2:
        return (points * weights[:, None]).sum(axis=0) / weights.sum()
    return weiszfeld(points, weights)


def kmeanspp_seed(
    points: np.ndarray, weights: np.ndarray, k: int, p: int, rng: np.random.Generator
) -> np.ndarray:
    """Weighted D^p sampling of k initial centers from the support."""
    n = points.shape[0]
    probs = weights / weights.sum()
    first = int(rng.choice(n, p=probs))
    chosen = [first]
    d = np.linalg.norm(points - points[first][None, :], axis=1)
    for _ in range(k - 1):
        mass = weights * (d if p == 1 else d**2)
        total = mass.sum()
        if total <= 0:
            # All remaining mass sits on the chosen centers; pick any new index.
            remaining = np.setdiff1d(np.arange(n), np.array(chosen))
            nxt = int(remaining[0]) if remaining.size else chosen[-1]
        else:
            nxt = int(rng.choice(n, p=mass / total))
        chosen.append(nxt)
        d = np.minimum(d, np.linalg.norm(points - points[nxt][None, :], axis=1))
    return points[chosen].copy()


def lloyd(
    points: np.ndarray,
    weights: np.ndarray,
    centers0: np.ndarray,
    p: int,
    max_iters: int,
    tol: float,
) -> tuple[np.ndarray, float, int]:
    """Weighted Lloyd refinement; the cost never increases across iterations."""
    centers = centers0.copy()
    cost = weighted_cost(points, weights, centers, p)
    iters = 0
    for iters in range(1, max_iters + 1):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assign = np.argmin(d2, axis=1)
        new_centers = centers.copy()
        for j in range(centers.shape[0]):
            sel = assign == j
            if not np.any(sel) or weights[sel].sum() <= 0:
                # Empty cluster: reseed at the point with the largest residual.
                worst = int(np.argmax(weights * np.sqrt(d2.min(axis=1))))
                new_centers[j] = points[worst]
                continue
            cand = _center_of(points[sel], weights[sel], p)
            # Guard: only accept a recentering that does not hurt the cluster.
            old_c = _cluster_cost(points[sel], weights[sel], centers[j], p)
            new_c = _cluster_cost(points[sel], weights[sel], cand, p)
            if new_c <= old_c:
                new_centers[j] = cand
        new_cost = weighted_cost(points, weights, new_centers, p)
        if new_cost > cost * (1 + 1e-12):
            break  # should not happen; keep the previous centers
        improved = cost - new_cost
        centers, cost = new_centers, new_cost
        if improved <= tol * max(cost, 1e-30):
            break
    return centers, cost, iters


def _cluster_cost(points, weights, center, p):
    d = np.linalg.norm(points - center[None, :], axis=1)
    return float(np.sum(weights * (d if p == 1 else d**2)))


def local_search(
    points: np.ndarray,
    weights: np.ndarray,
    k: int,
    p: int,
    rng: np.random.Generator,
    support: np.ndarray | None = None,
    max_passes: int = 200,
) -> tuple[np.ndarray, float]:
    """Best-improvement single-swap search over a finite candidate support.

    Returns centers drawn from `support` (default: the positive-weight
    points) whose cost is swap-optimal up to a 1e-12 relative threshold.
    """
    sup = points if support is None else np.asarray(support, dtype=np.float64)
    m = sup.shape[0]
    if k > m:
        raise ValueError("k exceeds support size")
    D = np.linalg.norm(points[:, None, :] - sup[None, :, :], axis=2)
    if p == 2:
        D = D**2
    Dw = D * weights[:, None]
    current = sorted(rng.choice(m, size=k, replace=False).tolist())

    def total_cost(idx_list):
        return float(Dw[:, idx_list].min(axis=1).sum())

    cost = total_cost(current)
    for _ in range(max_passes):
        vals = Dw[:, current]
        order = np.argsort(vals, axis=1)
        best_pos = order[:, 0]
        first = vals[np.arange(len(points)), best_pos]
        second = vals[np.arange(len(points)), order[:, 1]] if k > 1 else np.full(len(points), np.inf)
        best_swap = None
        best_swap_cost = cost
        for pos in range(k):
            base = np.where(best_pos == pos, second, first)
            cand_costs = np.minimum(base[:, None], Dw).sum(axis=0)
            j = int(np.argmin(cand_costs))
            if cand_costs[j] < best_swap_cost * (1 - 1e-12) and j not in current:
                best_swap_cost = float(cand_costs[j])
                best_swap = (pos, j)
        if best_swap is None:
            break
        pos, j = best_swap
        current[pos] = j
        cost = best_swap_cost
    return sup[sorted(current)].copy(), cost


def _distinct_rows(points: np.ndarray) -> np.ndarray:
    _, first_idx = np.unique(points.round(decimals=12), axis=0, return_index=True)
    return points[np.sort(first_idx)]


def solve(
    weighted: WeightedPointSet,
    k: int,
    p: int,
    config: SolverConfig | None = None,
    rng: np.random.Generator | None = None,
    seed: int = 0,
) -> SolveResult:
    """Approximately optimal k centers for a weighted point set."""
    config = config or SolverConfig()
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    if k < 1:
        raise ValueError("k must be >= 1")
    mask = weighted.weights > 0
    if not np.any(mask):
        raise ValueError("need at least one positive-weight entry")
    pts = weighted.points[mask]
    w = weighted.weights[mask]

    distinct = _distinct_rows(pts)
    if k > distinct.shape[0]:
        reps = [distinct[i % distinct.shape[0]] for i in range(k)]
        centers = np.stack(reps)
        return SolveResult(CenterSet(centers), weighted_cost(pts, w, centers, p), True, config.method)

    if rng is not None:
        seed = int(rng.integers(0, 2**63 - 1))

    best: SolveResult | None = None
    for restart in range(config.restarts):
        r = derive_rng(seed, "solver", config.method, restart)
        if config.method == "kmeanspp_lloyd":
            c0 = kmeanspp_seed(pts, w, k, p, r)
            centers, cost, iters = lloyd(pts, w, c0, p, config.max_iters, config.tol)
        else:
            centers, cost = local_search(pts, w, k, p, r)
            iters = 0
        if best is None or cost < best.cost:
            best = SolveResult(CenterSet(centers), cost, False, config.method, iters)
    assert best is not None
    return best
