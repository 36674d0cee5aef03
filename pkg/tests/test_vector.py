import math

import numpy as np
import pytest

from ldpcluster.seeds import derive_rng
from ldpcluster.vector import (
    RegionPartition,
    avg_count_floor,
    avg_error_bound,
    avg_sigma,
    gaussian_sigma,
    gaussian_sum,
    ldp_avg,
    sum_error_bound,
)


def test_gaussian_requires_positive_delta():
    with pytest.raises(ValueError):
        gaussian_sigma(1.0, 1.0, 0.0)


def test_noise_off_single_user_exact():
    x = np.array([[0.2, -0.4]])
    out = gaussian_sum(x, 1.0, 1.0, 1e-6, derive_rng(0, "g"), noise_off=True)
    assert np.array_equal(out, x[0])


def test_zero_points_mean_near_zero():
    # All points at the origin: the mean estimate over trials should sit
    # within 4 standard errors of 0 (per-trial std known in closed form).
    n, d, eps, delta = 400, 3, 1.0, 1e-6
    sigma = gaussian_sigma(1.0, eps, delta)
    per_trial_std = sigma * math.sqrt(n)
    trials = 100
    acc = np.zeros(d)
    for s in range(trials):
        acc += gaussian_sum(np.zeros((n, d)), 1.0, eps, delta, derive_rng(s, "zero"), mode="pooled")
    mean = acc / trials
    assert np.linalg.norm(mean) <= 4.0 * per_trial_std / math.sqrt(trials)


def test_sum_bound_monte_carlo_small():
    n, d, lam, eps, delta, beta = 2000, 5, 1.0, 1.0, 1e-6, 0.1
    rng = derive_rng(1, "sumdata")
    raw = rng.standard_normal((n, d))
    pts = raw / np.linalg.norm(raw, axis=1, keepdims=True) * rng.uniform(0, 1, (n, 1))
    truth = pts.sum(axis=0)
    bound = sum_error_bound(n, d, lam, eps, delta, beta)
    hits = 0
    for s in range(20):
        est = gaussian_sum(pts, lam, eps, delta, derive_rng(s, "sumtrial"), mode="pooled")
        hits += np.linalg.norm(est - truth) <= bound
    assert hits >= 17


def test_noise_independent_across_users():
    # Empirical covariance of two users' report coordinates ~ 0 (4 SE).
    eps, delta = 1.0, 1e-6
    sigma = gaussian_sigma(1.0, eps, delta)
    trials = 4000
    rng = derive_rng(2, "indep")
    a = np.empty(trials)
    b = np.empty(trials)
    for i in range(trials):
        noise = rng.standard_normal((2, 1)) * sigma
        a[i], b[i] = noise[0, 0], noise[1, 0]
    cov = float(np.mean(a * b) - a.mean() * b.mean())
    se = sigma * sigma / math.sqrt(trials)
    assert abs(cov) <= 4 * se


def _split_partition(pts):
    region_idx = (pts[:, 0] > 0).astype(np.int64)
    return RegionPartition(
        diameters=np.array([0.1, 0.1]),
        anchors=np.array([[-0.02, 0.0, 0.0], [0.02, 0.0, 0.0]]),
        membership=lambda x: region_idx,
        descriptor=[{"id": 0}, {"id": 1}],
    )


def test_ldp_avg_noise_off_exact_mean():
    rng = derive_rng(3, "avgdata")
    pts = rng.standard_normal((500, 2)) * 0.05 + 0.1
    part = RegionPartition(
        diameters=np.array([0.5]),
        anchors=np.zeros((1, 2)),
        membership=lambda x: np.zeros(x.shape[0], dtype=np.int64),
        descriptor=[{"id": 0}],
    )
    out = ldp_avg(pts, part, 1.0, 1e-6, 0.1, derive_rng(4, "avga"), noise_off=True)
    assert out[0].reliable
    assert np.allclose(out[0].mean, pts.mean(axis=0), atol=1e-12)


def test_ldp_avg_empty_region_unreliable():
    pts = np.full((50, 1), 0.7)
    part = RegionPartition(
        diameters=np.array([0.2, 0.2]),
        anchors=np.array([[0.7], [-0.7]]),
        membership=lambda x: np.zeros(x.shape[0], dtype=np.int64),  # nothing in region 1
        descriptor=[{"id": 0}, {"id": 1}],
    )
    out = ldp_avg(pts, part, 1.0, 1e-6, 0.1, derive_rng(5, "avge"), noise_off=True)
    assert out[0].reliable
    assert not out[1].reliable


def test_ldp_avg_empty_partition_rejected():
    with pytest.raises(ValueError):
        RegionPartition(
            diameters=np.zeros(0), anchors=np.zeros((0, 2)),
            membership=lambda x: np.zeros(0), descriptor=[],
        )


def test_claim_bound_monte_carlo_small():
    # Two regions, 50/50 split: mini version of the region-average bound.
    n, d, eps, delta, beta = 20_000, 3, 1.0, 1e-6, 0.1
    rng = derive_rng(6, "claim")
    pts = rng.standard_normal((n, d)) * 0.02
    pts[: n // 2, 0] = np.abs(pts[: n // 2, 0]) + 0.01
    pts[n // 2 :, 0] = -np.abs(pts[n // 2 :, 0]) - 0.01
    part = _split_partition(pts)
    r_t = n // 2
    assert r_t >= avg_count_floor(n, 2, eps / 2.0, beta)
    bound = avg_error_bound(n, d, 2, 0.1, eps, delta, beta, r_t)
    truth = [pts[pts[:, 0] <= 0].mean(axis=0), pts[pts[:, 0] > 0].mean(axis=0)]
    hits = 0
    for s in range(20):
        out = ldp_avg(pts, part, eps, delta, beta, derive_rng(s, "claimtrial"), mode="pooled")
        ok = all(
            np.linalg.norm(out[t].mean - truth[t]) <= bound for t in range(2) if out[t].reliable
        ) and all(out[t].reliable for t in range(2))
        hits += ok
    assert hits >= 17


def test_avg_sigma_formula():
    assert avg_sigma(0.5, 2.0, 1e-6) == pytest.approx(
        8.0 * 0.5 / 2.0 * math.sqrt(math.log(1.25e6)), rel=1e-12
    )
