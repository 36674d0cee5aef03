"""Locally private frequency oracle (histograms).

Realization: symmetric unary randomized response.  The domain is first
mapped to ``bins`` buckets by a seeded pairwise-independent hash (identity
when it already fits); each user reports a one-hot vector over the buckets
with every bit independently flipped with probability 1/(1+e^(eps/2)).
Flipping the input changes two bits, each with likelihood ratio e^(eps/2),
so a report's ratio never exceeds e^eps: the encoder is (eps, 0)-LDP.

Users holding nothing for a query (item ``None``) perturb the all-zeros
vector, which contributes zero to every debiased bin in expectation.

Aggregation is a per-bin debias of the summed bits.  For large user counts
the per-bin sum is sampled directly from its exact distribution (sum of two
binomials) instead of materializing every report; the transcript then holds
the pooled aggregate record.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .transcript import Transcript, pack_array

PER_USER_CELL_LIMIT = 1 << 22  # n_users * bins above this -> pooled sampling


@dataclass(frozen=True)
class DomainCodec:
    """Universal-hash compression of a finite domain into bins.

    Multiply-add-shift over 64-bit words: h(x) = ((a*x + b) mod 2^64) >> 7,
    reduced mod bins.  Distinct elements collide with probability about
    1/bins; when the domain already fits, the codec is the identity.
    """

    domain_size: int
    bins: int
    a: int
    b: int

    @classmethod
    def build(cls, domain_size: int, bins: int, rng: np.random.Generator) -> "DomainCodec":
        domain_size = int(domain_size)
        bins = int(min(bins, domain_size))
        if domain_size <= bins:
            return cls(domain_size, domain_size, 1, 0)
        a = int(rng.integers(0, 2**63, dtype=np.uint64)) * 2 + 1
        b = int(rng.integers(0, 2**64, dtype=np.uint64))
        return cls(domain_size, bins, a, b)

    @property
    def identity(self) -> bool:
        return self.domain_size <= self.bins

    def bin_of(self, elements) -> np.ndarray:
        x = np.asarray(elements, dtype=np.int64)
        if self.identity:
            return x
        with np.errstate(over="ignore"):
            mixed = x.astype(np.uint64) * np.uint64(self.a) + np.uint64(self.b)
        return (mixed >> np.uint64(7)).astype(np.int64) % self.bins

    def to_meta(self) -> dict:
        return {
            "domain_size": self.domain_size,
            "bins": self.bins,
            "a": self.a,
            "b": self.b,
        }

    @classmethod
    def from_meta(cls, meta: dict) -> "DomainCodec":
        return cls(int(meta["domain_size"]), int(meta["bins"]), int(meta["a"]), int(meta["b"]))


@dataclass(frozen=True)
class UnaryScheme:
    """Per-user randomizer configuration for one histogram invocation."""

    bins: int
    epsilon: float
    noise_off: bool = False

    def __post_init__(self):
        if self.bins < 1:
            raise ValueError("bins must be >= 1")
        if not self.noise_off and self.epsilon <= 0:
            raise ValueError("epsilon must be positive")

    @property
    def p_keep(self) -> float:
        if self.noise_off:
            return 1.0
        e = math.exp(self.epsilon / 2.0)
        return e / (1.0 + e)

    @property
    def flip_prob(self) -> float:
        return 1.0 - self.p_keep


def freq_encode(scheme: UnaryScheme, item_bin: int | None, rng: np.random.Generator) -> np.ndarray:
    """One user's report: perturbed one-hot vector over the bins."""
    onehot = np.zeros(scheme.bins, dtype=np.uint8)
    if item_bin is not None:
        if not 0 <= item_bin < scheme.bins:
            raise ValueError("item bin out of range")
        onehot[item_bin] = 1
    if scheme.noise_off:
        return onehot
    flips = rng.random(scheme.bins) < scheme.flip_prob
    return np.bitwise_xor(onehot, flips.astype(np.uint8))


def encode_batch(scheme: UnaryScheme, item_bins: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Reports for many users at once; item bin -1 means the user holds nothing."""
    n = item_bins.shape[0]
    onehot = np.zeros((n, scheme.bins), dtype=np.uint8)
    held = item_bins >= 0
    onehot[np.nonzero(held)[0], item_bins[held]] = 1
    if scheme.noise_off:
        return onehot
    flips = (rng.random((n, scheme.bins)) < scheme.flip_prob).astype(np.uint8)
    return np.bitwise_xor(onehot, flips)


def sample_pooled_counts(
    scheme: UnaryScheme, true_counts: np.ndarray, n_users: int, rng: np.random.Generator
) -> np.ndarray:
    """Sample the per-bin report-bit sums from their exact distribution.

    A bin with f true holders collects Binom(f, p) + Binom(n-f, 1-p) set
    bits; bins are independent because every report bit is independent.
    """
    f = np.asarray(true_counts, dtype=np.int64)
    if f.shape[0] != scheme.bins:
        raise ValueError("true_counts length must equal bins")
    if int(f.sum()) > n_users or np.any(f < 0):
        raise ValueError("invalid true counts")
    p = scheme.p_keep
    if scheme.noise_off:
        return f.copy()
    kept = rng.binomial(f, p)
    injected = rng.binomial(n_users - f, 1.0 - p)
    return (kept + injected).astype(np.int64)


def histogram_error_bound(epsilon: float, n: int, beta: float) -> float:
    """Per-element error bound (3/eps)*sqrt(n*ln(4/beta)) targeted by the oracle."""
    return (3.0 / epsilon) * math.sqrt(n * math.log(4.0 / beta))


@dataclass(frozen=True)
class FrequencyEstimate:
    """Debiased estimates per bin, with the recorded error bound."""

    estimates: np.ndarray
    n: int
    epsilon: float
    beta: float
    codec: DomainCodec | None = None

    @property
    def err(self) -> float:
        return histogram_error_bound(self.epsilon, self.n, self.beta)

    def query(self, elements) -> np.ndarray:
        if self.codec is None:
            idx = np.asarray(elements, dtype=np.int64)
        else:
            idx = self.codec.bin_of(elements)
        return self.estimates[idx]


def debias_counts(scheme: UnaryScheme, bit_counts: np.ndarray, n_users: int) -> np.ndarray:
    p = scheme.p_keep
    denom = 2.0 * p - 1.0
    if denom <= 0:
        raise ValueError("degenerate scheme: p_keep must exceed 1/2")
    return (bit_counts.astype(np.float64) - n_users * (1.0 - p)) / denom


def freq_aggregate(
    scheme: UnaryScheme,
    bit_counts: np.ndarray,
    n_users: int,
    beta: float,
    codec: DomainCodec | None = None,
) -> FrequencyEstimate:
    """Unbiased estimates from summed report bits."""
    est = debias_counts(scheme, np.asarray(bit_counts, dtype=np.int64), n_users)
    eps = scheme.epsilon if not scheme.noise_off else math.inf
    return FrequencyEstimate(estimates=est, n=n_users, epsilon=eps, beta=beta, codec=codec)


def run_histogram(
    item_bins: np.ndarray,
    user_ids: np.ndarray,
    scheme: UnaryScheme,
    beta: float,
    rng: np.random.Generator,
    transcript: Transcript,
    round_id: int,
    tag: str,
    codec: DomainCodec | None = None,
    mode: str = "auto",
) -> FrequencyEstimate:
    """Execute one histogram round: encode, record to transcript, aggregate.

    The aggregate is always computed from the transcript stream, so reading
    the stream back from disk and re-aggregating reproduces it exactly.
    """
    item_bins = np.asarray(item_bins, dtype=np.int64)
    n = item_bins.shape[0]
    if mode == "auto":
        mode = "per_user" if n * scheme.bins <= PER_USER_CELL_LIMIT else "pooled"
    meta = {
        "kind": "freq",
        "bins": scheme.bins,
        "n_users": n,
        "epsilon": scheme.epsilon,
        "noise_off": scheme.noise_off,
        "beta": beta,
        "mode": mode,
    }
    if codec is not None:
        meta["codec"] = codec.to_meta()
    stream = transcript.new_stream(round_id, tag, meta)
    if mode == "per_user":
        reports = encode_batch(scheme, item_bins, rng)
        packed = np.packbits(reports, axis=1)
        for row, uid in enumerate(np.asarray(user_ids, dtype=np.int64)):
            stream.add_report(int(uid), packed[row].tobytes())
    elif mode == "pooled":
        held = item_bins[item_bins >= 0]
        true_counts = np.bincount(held, minlength=scheme.bins)
        counts = sample_pooled_counts(scheme, true_counts, n, rng)
        stream.set_pooled(pack_array(counts))
    else:
        raise ValueError(f"unknown histogram mode {mode!r}")
    return aggregate_stream(stream)


def aggregate_stream(stream) -> FrequencyEstimate:
    """Aggregate a recorded frequency stream (live or replayed from disk)."""
    meta = stream.meta
    scheme = UnaryScheme(
        bins=int(meta["bins"]),
        epsilon=float(meta["epsilon"]),
        noise_off=bool(meta["noise_off"]),
    )
    codec = DomainCodec.from_meta(meta["codec"]) if "codec" in meta else None
    return freq_aggregate(scheme, stream.bit_counts(), stream.n_users, float(meta["beta"]), codec)
