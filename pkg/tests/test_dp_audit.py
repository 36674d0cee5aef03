import math

import pytest

from ldpcluster.dp_audit import audit_gaussian, audit_unary
from ldpcluster.errors import RefusalError
from ldpcluster.seeds import derive_rng
from ldpcluster.vector import avg_sigma, gaussian_sigma


@pytest.mark.parametrize("eps", [0.1, 0.5, 1.0, 2.0])
@pytest.mark.parametrize("bins", [2, 4, 8, 16])
def test_unary_ratio_exactly_e_eps(bins, eps):
    res = audit_unary(bins, eps)
    assert res.passed
    # The worst pair achieves the bound exactly: ratio == e^eps.
    assert res.max_ratio == pytest.approx(math.exp(eps), rel=1e-9)


def test_noise_off_encoder_fails_audit():
    res = audit_unary(4, 1.0, noise_off=True)
    assert not res.passed
    assert math.isinf(res.max_ratio)


def test_oblivious_randomizer_ratio_one():
    res = audit_unary(4, 1.0, oblivious=True)
    assert res.passed
    assert res.max_ratio == 1.0


def test_non_enumerable_refused():
    with pytest.raises(RefusalError):
        audit_unary(20, 1.0)


@pytest.mark.parametrize("eps", [0.1, 0.5, 1.0, 2.0])
def test_gaussian_sum_reporter_passes(eps):
    delta = 1e-6
    sigma = gaussian_sigma(1.0, eps, delta)
    res = audit_gaussian("sum", sigma, 2.0, eps, delta, 200_000, derive_rng(1, "ga", eps))
    assert res.passed


@pytest.mark.parametrize("eps", [0.5, 2.0])
def test_avg_block_reporter_passes_at_half_budget(eps):
    delta = 1e-6
    sigma = avg_sigma(1.0, eps, delta)
    res = audit_gaussian("avg", sigma, math.sqrt(2.0), eps / 2.0, delta, 200_000,
                         derive_rng(2, "gb", eps))
    assert res.passed


def test_undersized_noise_fails():
    # Noise far below calibration must be caught.
    res = audit_gaussian("bad", 0.05, 2.0, 1.0, 1e-6, 100_000, derive_rng(3, "gc"))
    assert not res.passed


def test_all_enumerable_domain_sizes():
    for bins in range(2, 17):
        res = audit_unary(bins, 1.0)
        assert res.passed, bins
        assert res.max_ratio <= math.exp(1.0) * (1 + 1e-9)
