"""Additive-error floor experiment.

A promise bit-counting problem (all zeros vs at least tau ones) reduces to
2-means/2-median on the line: the server broadcasts the midpoint mu of a
uniformly drawn grid interval I of width r = beta_const/4; users holding a
one place their point at mu, users holding a zero stay at 0; the reduction
answers 1 iff the clustering protocol returns a center inside I.  On the
all-zero input the users never look at mu, so any protocol answers 1 with
probability at most 2r over the interval draw, while a protocol that errs
on an instance with tau ones must have paid clustering cost at least
(r/2)^p * tau even though the optimum is 0.  Since bit counting under local
privacy needs tau on the order of sqrt(n), the clustering error floor
follows; this module measures those two sides empirically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .stats import mean_ci95

DEFAULT_BETA_CONST = 0.4  # interval width r = beta/4 = 0.1: ten grid cells


def gap_tr(bits, tau: float):
    """0 if no ones, 1 if at least tau ones, None (undefined) in between."""
    total = int(np.sum(np.asarray(bits, dtype=np.int64)))
    if total == 0:
        return 0
    if total >= tau:
        return 1
    return None


@dataclass(frozen=True)
class ReductionOutcome:
    answer: int
    interval: tuple[float, float]
    mu: float
    centers: np.ndarray
    cost_on_instance: float


def protocol_b(
    bits: np.ndarray,
    clustering_protocol: Callable[[np.ndarray, np.random.Generator], np.ndarray],
    rng: np.random.Generator,
    beta_const: float = DEFAULT_BETA_CONST,
    p: int = 2,
) -> ReductionOutcome:
    """One run of the reduction.

    `clustering_protocol(points, rng)` must return 2 centers for points in
    [0, 1].  The reduction is post-processing of that protocol's output, so
    it inherits the protocol's privacy unchanged.
    """
    bits = np.asarray(bits, dtype=np.int64)
    r = beta_const / 4.0
    n_cells = int(round(1.0 / r))
    cell = int(rng.integers(0, n_cells))
    lo, hi = cell * r, (cell + 1) * r
    mu = 0.5 * (lo + hi)
    x = np.where(bits == 1, mu, 0.0)
    centers = np.asarray(clustering_protocol(x, rng), dtype=np.float64).reshape(-1)
    answer = int(np.any((centers >= lo) & (centers <= hi)))
    dists = np.min(np.abs(x[:, None] - centers[None, :]), axis=1)
    cost = float(np.sum(dists if p == 1 else dists**2))
    return ReductionOutcome(answer, (lo, hi), mu, centers, cost)


def oblivious_protocol(points: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Input-ignoring reference protocol: two uniform centers in [0, 1]."""
    return rng.uniform(0.0, 1.0, size=2)


def floor_experiment(
    n_grid,
    protocol: Callable[[np.ndarray, np.random.Generator], np.ndarray],
    trials: int,
    rng: np.random.Generator,
    tau_factors=(0.25, 1.0, 4.0, 16.0),
    beta_const: float = DEFAULT_BETA_CONST,
    p: int = 2,
) -> list[dict]:
    """Decision error rates and realized costs on the hard instance family.

    For every n: the all-zero instance, plus one instance with tau ones for
    each tau = factor * sqrt(n) (rows with tau < 1 are skipped: the promise
    problem is undefined there).  Returns rows with the fixed columns
    n, tau, instance, decision_error_rate, mean_cost, ci95, cost_floor,
    floor_violations.
    """
    r = beta_const / 4.0
    rows = []
    for n in n_grid:
        n = int(n)
        cases = [("zeros", 0)]
        for f in tau_factors:
            tau = int(round(f * math.sqrt(n)))
            if tau >= 1:
                cases.append((f"ones_tau={tau}", tau))
        for label, tau in cases:
            bits = np.zeros(n, dtype=np.int64)
            truth = 0
            if tau > 0:
                ones = rng.choice(n, size=tau, replace=False)
                bits[ones] = 1
                truth = 1
            errors = 0
            costs = []
            floor_viol = 0
            floor = (r / 2.0) ** p * tau
            for _ in range(trials):
                out = protocol_b(bits, protocol, rng, beta_const, p)
                err = out.answer != truth
                errors += err
                costs.append(out.cost_on_instance)
                if tau > 0 and err and out.cost_on_instance < floor - 1e-9:
                    floor_viol += 1
            mean_c, ci = mean_ci95(costs)
            rows.append(
                {
                    "n": n,
                    "tau": tau,
                    "instance": label,
                    "decision_error_rate": errors / trials,
                    "mean_cost": mean_c,
                    "ci95": ci,
                    "cost_floor": floor,
                    "floor_violations": floor_viol,
                }
            )
    return rows
