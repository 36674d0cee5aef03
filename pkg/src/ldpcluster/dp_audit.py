"""Likelihood-ratio audits of the shipped local randomizers.

For the unary-response frequency scheme with few bins the report space is
enumerated exactly: the audit computes max over input pairs and report atoms
of P[report|x] / P[report|x'] and compares it to e^eps.  For Gaussian
reporters the report space is continuous, so the audit works on the privacy
loss: it checks Pr[loss > eps] <= delta both in closed form and on sampled
losses (the mechanism is (eps, delta), not pure eps).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import RefusalError

MAX_ENUM_BINS = 16
RATIO_SLACK = 1e-9  # float tolerance on "<= e^eps exactly"


@dataclass(frozen=True)
class AuditResult:
    name: str
    kind: str  # "exact" or "sampled"
    epsilon: float
    delta: float
    max_ratio: float
    exceed_rate: float
    exceed_allowed: float
    passed: bool

    def describe(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status} {self.name} ({self.kind}) eps={self.epsilon:g} "
            f"max_ratio={self.max_ratio:.6g} bound={math.exp(self.epsilon):.6g} "
            f"exceed={self.exceed_rate:.3g}<="
            f"{self.exceed_allowed:.3g}"
        )


def _std_normal_sf(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def audit_unary(bins: int, epsilon: float, noise_off: bool = False, oblivious: bool = False) -> AuditResult:
    """Exact ratio audit of the unary-response encoder over <= 16 bins.

    Inputs are every bin plus the null item; reports are all 2^bins bit
    vectors.  An input-oblivious encoder audits to ratio 1; the noise-free
    debug encoder is deterministic and fails with an infinite ratio.
    """
    if bins > MAX_ENUM_BINS:
        raise RefusalError(
            "NOT_ENUMERABLE",
            f"{bins} bins gives 2^{bins} reports; exact audit capped at {MAX_ENUM_BINS} bins",
        )
    name = f"unary[bins={bins}]"
    if noise_off:
        return AuditResult(name + "/noise_off", "exact", epsilon, 0.0, math.inf, 1.0, 0.0, False)
    if oblivious:
        # Every input maps to the same report distribution.
        return AuditResult(name + "/oblivious", "exact", epsilon, 0.0, 1.0, 0.0, 0.0, True)

    e = math.exp(epsilon / 2.0)
    p = e / (1.0 + e)
    q = 1.0 - p
    lp, lq = math.log(p), math.log(q)
    n_reports = 1 << bins
    reps = np.arange(n_reports, dtype=np.uint64)
    popcount = np.zeros(n_reports, dtype=np.int64)
    for j in range(bins):
        popcount += ((reps >> np.uint64(j)) & np.uint64(1)).astype(np.int64)
    # log P(rep | x) for x = bin index: depends on popcount s and bit at x.
    logp = np.empty((bins + 1, n_reports), dtype=np.float64)
    for x in range(bins):
        bit = ((reps >> np.uint64(x)) & np.uint64(1)).astype(np.int64)
        logp[x] = (bins - 1 - popcount + 2 * bit) * lp + (popcount + 1 - 2 * bit) * lq
    # Null input: the all-zeros vector perturbed.
    logp[bins] = (bins - popcount) * lp + popcount * lq
    max_log = logp.max(axis=0)
    min_log = logp.min(axis=0)
    max_ratio = float(np.exp((max_log - min_log).max()))
    passed = max_ratio <= math.exp(epsilon) * (1.0 + RATIO_SLACK)
    return AuditResult(name, "exact", epsilon, 0.0, max_ratio, 0.0, 0.0, passed)


def audit_gaussian(
    name: str,
    sigma: float,
    sensitivity: float,
    epsilon: float,
    delta: float,
    samples: int,
    rng: np.random.Generator,
) -> AuditResult:
    """Sampled privacy-loss audit of a Gaussian reporter.

    Under the worst-case input pair at distance `sensitivity`, the privacy
    loss of a report is N(mu, s^2) with mu = sens^2/(2 sigma^2), s = sens/sigma.
    The mechanism meets (eps, delta) if Pr[loss > eps] <= delta.
    """
    if sigma <= 0:
        return AuditResult(name, "sampled", epsilon, delta, math.inf, 1.0, delta, False)
    mu = sensitivity**2 / (2.0 * sigma**2)
    s = sensitivity / sigma
    analytic = _std_normal_sf((epsilon - mu) / s)
    losses = rng.standard_normal(samples) * s + mu
    exceed = float(np.count_nonzero(losses > epsilon)) / samples
    with np.errstate(over="ignore"):
        max_ratio = float(np.exp(losses.max()))
    slack = 4.0 * math.sqrt(max(analytic, 1.0 / samples) / samples) + 2.0 / samples
    allowed = delta + slack
    passed = analytic <= delta and exceed <= allowed
    return AuditResult(name, "sampled", epsilon, delta, max_ratio, exceed, allowed, passed)
