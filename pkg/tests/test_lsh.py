import math

import numpy as np
import pytest

from ldpcluster.errors import RefusalError
from ldpcluster.lsh import (
    LshFunction,
    base_collision_prob,
    build_family,
    build_relaxed,
    compression_collision_bound,
    estimate_collision,
    sample_hash,
)
from ldpcluster.seeds import derive_rng


def test_distance_zero_always_collides():
    spec = build_relaxed(3, 0.1, 0.6, 0.2)
    assert estimate_collision(spec, 0.0, 10**4, derive_rng(0, "z")) == (1.0, 1.0, 1.0)
    h = sample_hash(spec, derive_rng(1, "z"))
    pts = derive_rng(2, "z").standard_normal((50, 3)) * 0.01
    assert np.array_equal(h.evaluate(pts), h.evaluate(pts.copy()))


def test_same_seed_same_function():
    spec = build_relaxed(4, 0.2, 0.7, 0.3)
    probes = derive_rng(3, "p").standard_normal((100, 4))
    h1 = sample_hash(spec, derive_rng(42, "h"))
    h2 = sample_hash(spec, derive_rng(42, "h"))
    assert np.array_equal(h1.evaluate(probes), h2.evaluate(probes))


def test_distinct_seeds_disagree():
    spec = build_relaxed(4, 0.2, 0.7, 0.3)
    probes = derive_rng(3, "p").standard_normal((100, 4))
    h1 = sample_hash(spec, derive_rng(1, "h"))
    h2 = sample_hash(spec, derive_rng(2, "h"))
    assert np.any(h1.evaluate(probes) != h2.evaluate(probes))


def test_output_within_universe():
    spec = build_relaxed(4, 0.2, 0.7, 0.3, universe=10_000)
    h = sample_hash(spec, derive_rng(5, "u"))
    vals = h.evaluate(derive_rng(6, "u").standard_normal((500, 4)))
    assert vals.min() >= 0 and vals.max() < 10_000


def test_k1_matches_closed_form_curve():
    spec = build_relaxed(6, 0.5, 0.6, 0.2, K=1)
    rng = derive_rng(7, "cf")
    for dist in (0.3, 0.5, 1.2):
        p_hat, lo, hi = estimate_collision(spec, dist, 2 * 10**4, rng)
        analytic = base_collision_prob(dist, spec.width)
        assert lo - 0.02 <= analytic <= hi + 0.02


def test_monotone_in_distance():
    spec = build_relaxed(5, 0.4, 0.7, 0.25, K=2)
    rng = derive_rng(8, "mono")
    grid = np.linspace(0.1, 3.0, 10)
    estimates = [estimate_collision(spec, float(s), 10**4, rng) for s in grid]
    for (p_prev, lo_prev, hi_prev), (p_next, lo_next, hi_next) in zip(estimates, estimates[1:]):
        assert lo_next <= hi_prev + 0.02  # non-increasing up to interval slack


def test_amplification_law():
    # log p_hat(K) should match K * log p_hat(1) within Monte-Carlo slack.
    rng = derive_rng(9, "amp")
    base = build_relaxed(4, 0.3, 0.6, 0.2, K=1)
    dist = 0.3
    p1, lo1, hi1 = estimate_collision(base, dist, 4 * 10**4, rng)
    for K in (2, 3):
        spec = build_relaxed(4, 0.3, 0.6**K, 0.2**K, K=K)
        assert spec.width == pytest.approx(base.width, rel=1e-9)
        pk, lok, hik = estimate_collision(spec, dist, 4 * 10**4, rng)
        assert math.log(pk) == pytest.approx(K * math.log(p1), abs=3 * K * 0.05)


def test_near_far_separation():
    spec = build_relaxed(5, 0.2, 0.7, 0.2, K=2)
    rng = derive_rng(10, "sep")
    p_near = estimate_collision(spec, spec.r, 10**4, rng)
    p_far = estimate_collision(spec, spec.c * spec.r, 10**4, rng)
    assert p_far[2] < p_near[1]  # non-overlapping Wilson intervals


def test_far_distance_estimate_vanishes():
    spec = build_relaxed(4, 0.1, 0.6, 0.2)
    p_hat, _, _ = estimate_collision(spec, 1e6 * spec.r, 10**4, derive_rng(11, "far"))
    assert p_hat <= 1e-3


def test_trials_floor_enforced():
    spec = build_relaxed(4, 0.1, 0.6, 0.2)
    with pytest.raises(ValueError):
        estimate_collision(spec, 0.1, 100, derive_rng(12, "few"))


def test_theory_family_targets():
    n = 2**12
    spec = build_family(6, n, 0.1, a=0.3, b=0.15)
    assert spec.p_target == pytest.approx(n**-0.15)
    assert spec.q_target == pytest.approx(n**-2.3)
    assert spec.universe == n**3
    assert spec.c > 1
    # analytic amplified probabilities respect the targets with margin
    assert spec.amplified_prob(spec.r) >= spec.p_target
    assert spec.amplified_prob(spec.c * spec.r) <= spec.q_target


def test_infeasible_exponents_refused():
    with pytest.raises(RefusalError):
        build_family(4, 2**10, 0.1, a=0.1, b=0.2)  # needs a > b


def test_compression_inflation_bound():
    # Analytic: the compression stage adds at most ~2/universe collision
    # probability, i.e. at most 2 n^-3 at the theory universe size.
    n = 2**12
    spec = build_family(6, n, 0.1, a=0.3, b=0.15)
    assert compression_collision_bound(spec) <= 2.0 * n**-3
    # Empirical: far pairs still collide at most q + 2 n^-3-ish.
    q_hat, _, hi = estimate_collision(spec, spec.c * spec.r, 2 * 10**4, derive_rng(13, "cmp"))
    assert q_hat <= spec.q_target + 2.0 * n**-3 + 3e-4  # Wilson-scale slack at 2e4 trials


def test_serialize_round_trip():
    spec = build_relaxed(5, 0.3, 0.6, 0.2, K=3)
    h = sample_hash(spec, derive_rng(14, "ser"))
    probes = derive_rng(15, "ser").standard_normal((64, 5))
    h2 = LshFunction.deserialize(h.serialize())
    assert np.array_equal(h.evaluate(probes), h2.evaluate(probes))
