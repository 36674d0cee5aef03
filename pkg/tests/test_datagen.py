import math

import numpy as np
import pytest

from ldpcluster.datagen import GeneratorSpec, generate
from ldpcluster.errors import RefusalError
from ldpcluster.seeds import derive_rng


def test_single_component_sigma_zero_identical_points():
    spec = GeneratorSpec(components=1, sigma=0.0, separation=1.0)
    pts, labels, means = generate(50, 3, 1.0, spec, derive_rng(1, "g"))
    assert np.all(pts.points == pts.points[0])
    assert np.all(labels == 0)


def test_component_counts_multinomial_bound():
    k, n = 5, 100_000
    spec = GeneratorSpec(components=k, sigma=0.01, separation=10.0)
    pts, labels, _ = generate(n, 4, 1.0, spec, derive_rng(2, "g"))
    counts = np.bincount(labels[labels >= 0], minlength=k)
    sd = math.sqrt(n * (1 / k) * (1 - 1 / k))
    assert np.all(np.abs(counts - n / k) <= 4 * sd)


def test_all_points_inside_ball():
    spec = GeneratorSpec(components=3, sigma=0.2, separation=3.0, background_fraction=0.2)
    pts, _, _ = generate(2000, 5, 1.0, spec, derive_rng(3, "g"))
    assert np.all(np.linalg.norm(pts.points, axis=1) <= 1.0 + 1e-12)


def test_infeasible_mixture_refused():
    with pytest.raises(RefusalError) as exc:
        generate(100, 2, 1.0, GeneratorSpec(components=3, sigma=0.5, separation=10.0),
                 derive_rng(4, "g"))
    assert exc.value.code == "MIXTURE_INFEASIBLE"


def test_small_cluster_size_law():
    spec = GeneratorSpec(components=2, sigma=0.01, separation=10.0,
                         small_cluster_coeff=1.0, small_cluster_exponent=0.55)
    n = 2**14
    pts, labels, _ = generate(n, 3, 1.0, spec, derive_rng(5, "g"))
    small = int(np.count_nonzero(labels == 2))
    assert small == round(n**0.55)


def test_deterministic_given_seed():
    spec = GeneratorSpec(components=2, sigma=0.05, separation=8.0)
    a, la, _ = generate(500, 3, 1.0, spec, derive_rng(6, "g"))
    b, lb, _ = generate(500, 3, 1.0, spec, derive_rng(6, "g"))
    assert np.array_equal(a.points, b.points)
    assert np.array_equal(la, lb)
