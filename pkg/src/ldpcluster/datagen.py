"""Synthetic instance generator: Gaussian mixtures inside the unit-norm ball.

Component means are placed on a scaled simplex-like frame with a minimum
pairwise separation; samples falling outside the ball are redrawn (rejection
at the boundary).  Optional extras used by the experiments: a uniform
background fraction, and one sub-scale planted cluster whose size grows as a
power of n (the hard-instance knob for the additive-error scaling study).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RefusalError
from .geometry import PointSet


@dataclass
class GeneratorSpec:
    components: int = 5
    sigma: float = 0.05
    separation: float = 10.0  # minimum pairwise mean distance, in sigmas
    background_fraction: float = 0.0
    small_cluster_coeff: float = 0.0  # size = coeff * n^exponent, 0 disables
    small_cluster_exponent: float = 0.55
    small_cluster_sigma: float = 0.002

    def __post_init__(self):
        if self.components < 1:
            raise ValueError("components must be >= 1")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not 0 <= self.background_fraction < 1:
            raise ValueError("background_fraction must be in [0, 1)")


def _place_means(k: int, d: int, lam: float, min_sep: float, rng: np.random.Generator) -> np.ndarray:
    """k points in B(0, 0.9*lam) with pairwise distance >= min_sep, by
    farthest-candidate sampling; refuses when the ball cannot host them."""
    shell = 0.9 * lam
    if k == 1:
        return np.zeros((1, d))
    means = []
    attempts = 0
    while len(means) < k:
        attempts += 1
        if attempts > 5000:
            raise RefusalError(
                "MIXTURE_INFEASIBLE",
                f"cannot place {k} means with separation {min_sep:.3g} inside radius {shell:.3g}",
                {"k": k, "separation": min_sep},
            )
        cand = rng.standard_normal(d)
        cand = cand / np.linalg.norm(cand) * rng.uniform(0.35, 1.0) * shell
        if all(np.linalg.norm(cand - m) >= min_sep for m in means):
            means.append(cand)
    return np.stack(means)


def _sample_ball(n: int, d: int, lam: float, rng: np.random.Generator) -> np.ndarray:
    raw = rng.standard_normal((n, d))
    raw /= np.linalg.norm(raw, axis=1, keepdims=True)
    radii = rng.uniform(0.0, 1.0, size=(n, 1)) ** (1.0 / d)
    return raw * radii * lam


def _sample_component(mean, sigma, count, lam, rng) -> np.ndarray:
    out = np.empty((count, mean.shape[0]))
    filled = 0
    while filled < count:
        draw = mean[None, :] + rng.standard_normal((count - filled, mean.shape[0])) * sigma
        ok = np.linalg.norm(draw, axis=1) <= lam
        kept = draw[ok]
        out[filled : filled + kept.shape[0]] = kept
        filled += kept.shape[0]
    return out


def generate(
    n: int,
    d: int,
    lam: float,
    spec: GeneratorSpec,
    rng: np.random.Generator,
) -> tuple[PointSet, np.ndarray, np.ndarray]:
    """Sample n points; returns (points, labels, means).

    Labels: 0..components-1 for mixture members, components for the planted
    sub-scale cluster, -1 for background.
    """
    min_sep = spec.separation * max(spec.sigma, 1e-9)
    if min_sep > 1.8 * lam:
        raise RefusalError(
            "MIXTURE_INFEASIBLE",
            f"separation {min_sep:.3g} cannot fit in a ball of radius {lam:.3g}",
        )
    if 3.0 * spec.sigma > 0.95 * lam:
        raise RefusalError(
            "MIXTURE_INFEASIBLE",
            f"sigma {spec.sigma:.3g} leaves no room for means inside radius {lam:.3g}",
        )
    means = _place_means(spec.components, d, lam, min_sep, rng)

    n_small = 0
    if spec.small_cluster_coeff > 0:
        n_small = min(n // 4, max(1, round(spec.small_cluster_coeff * n**spec.small_cluster_exponent)))
    n_bg = round(spec.background_fraction * (n - n_small))
    n_mix = n - n_small - n_bg
    counts = np.bincount(
        rng.integers(0, spec.components, size=n_mix), minlength=spec.components
    )

    parts = []
    labels = []
    for c in range(spec.components):
        pts = _sample_component(means[c], spec.sigma, int(counts[c]), lam, rng)
        parts.append(pts)
        labels.append(np.full(int(counts[c]), c))
    if n_small:
        # Far corner of the ball, opposite the mean of the mixture frame.
        anchor = -means.mean(axis=0)
        nrm = np.linalg.norm(anchor)
        anchor = anchor / (nrm if nrm > 1e-9 else 1.0) * 0.93 * lam
        parts.append(_sample_component(anchor, spec.small_cluster_sigma, n_small, lam, rng))
        labels.append(np.full(n_small, spec.components))
    if n_bg:
        parts.append(_sample_ball(n_bg, d, lam, rng))
        labels.append(np.full(n_bg, -1))

    points = np.vstack(parts)
    label_arr = np.concatenate(labels)
    perm = rng.permutation(n)
    return PointSet(points[perm], lam), label_arr[perm], means
