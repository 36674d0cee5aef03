"""Locality-sensitive hashing with tunable collision guarantees.

Base family: Gaussian-projection bucketing, hash(x) = floor((<g, x> + u) / w)
with g standard normal and u uniform in [0, w).  Its collision probability
at distance s is a closed form in omega = w / s:

    P(omega) = 1 - 2*Phi(-omega) - (2 / (sqrt(2 pi) omega)) * (1 - exp(-omega^2 / 2))

which is the analytic oracle behind every Monte-Carlo check here.  K base
functions are concatenated to amplify the near/far collision gap, and the
K-tuple is compressed into the universe [0, n^3) with a multiply-shift
universal hash so collisions of far pairs inflate by at most ~n^-3.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import RefusalError
from .stats import wilson_interval

LSH_MAGIC = b"LSH1"
MIN_COLLISION_TRIALS = 10_000
_SPLITMIX_GAMMA = np.uint64(0x9E3779B97F4A7C15)


def base_collision_prob(distance: float, width: float) -> float:
    """Closed-form collision probability of one projection bucket."""
    if distance < 0 or width <= 0:
        raise ValueError("distance must be >= 0 and width > 0")
    if distance == 0:
        return 1.0
    omega = width / distance
    phi_neg = 0.5 * math.erfc(omega / math.sqrt(2.0))
    return 1.0 - 2.0 * phi_neg - (2.0 / (math.sqrt(2.0 * math.pi) * omega)) * (
        1.0 - math.exp(-(omega**2) / 2.0)
    )


def _solve_width_ratio(target: float) -> float:
    """omega such that P(omega) = target, by bisection (P is increasing)."""
    if not 0.0 < target < 1.0:
        raise ValueError("target probability must be in (0, 1)")
    lo, hi = 1e-9, 1e9
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if base_collision_prob(1.0, mid) < target:
            lo = mid
        else:
            hi = mid
    return math.sqrt(lo * hi)


@dataclass(frozen=True)
class LshSpec:
    """Family parameters: near/far collision targets and their geometry."""

    dim: int
    r: float
    c: float
    K: int
    width: float
    p_target: float
    q_target: float
    universe: int
    a: float = math.nan
    b: float = math.nan
    n: int = 0
    mode: str = "relaxed"

    def __post_init__(self):
        if not (0.0 <= self.q_target < self.p_target <= 1.0):
            raise ValueError("need 0 <= q_target < p_target <= 1")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.c <= 1.0:
            raise ValueError("c must exceed 1")

    def amplified_prob(self, distance: float) -> float:
        return base_collision_prob(distance, self.width) ** self.K


def build_family(d: int, n: int, r: float, a: float, b: float) -> LshSpec:
    """Family meeting p >= n^-b at distance r and q <= n^(-2-a) at distance c*r.

    Scans concatenation lengths, solving the projection width for the near
    target with margin and the implied separation c for the far target, and
    returns the spec with the smallest c.  Refuses if no feasible geometry
    exists for the requested exponents.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if not (a > b > 0):
        raise RefusalError("LSH_INFEASIBLE", f"exponents must satisfy a > b > 0, got a={a}, b={b}")
    p_amp = min(1.0, n ** (-b) * 1.08)  # 8% headroom above the near threshold
    q_amp = n ** (-2.0 - a) / 1.5  # 50% headroom below the far threshold
    best: LshSpec | None = None
    for K in range(1, 65):
        p_base = p_amp ** (1.0 / K)
        q_base = q_amp ** (1.0 / K)
        if p_base >= 1.0 - 1e-12 or q_base <= 0.0:
            continue
        omega_p = _solve_width_ratio(p_base)
        omega_q = _solve_width_ratio(q_base)
        c = omega_p / omega_q
        if c <= 1.0:
            continue
        spec = LshSpec(
            dim=d,
            r=r,
            c=c,
            K=K,
            width=omega_p * r,
            p_target=n ** (-b),
            q_target=n ** (-2.0 - a),
            universe=int(n) ** 3,
            a=a,
            b=b,
            n=n,
            mode="theory",
        )
        if best is None or spec.c < best.c:
            best = spec
    if best is None:
        raise RefusalError(
            "LSH_INFEASIBLE",
            f"no concatenation length K in [1, 64] separates p=n^-{b} from q=n^-(2+{a}) at n={n}",
        )
    return best


def build_relaxed(
    d: int, r: float, p_target: float, q_target: float, K: int = 1, universe: int | None = None
) -> LshSpec:
    """Desk-scale family with the collision targets set directly."""
    if not (0.0 < q_target < p_target < 1.0):
        raise ValueError("need 0 < q_target < p_target < 1")
    p_base = p_target ** (1.0 / K)
    q_base = q_target ** (1.0 / K)
    omega_p = _solve_width_ratio(p_base)
    omega_q = _solve_width_ratio(q_base)
    return LshSpec(
        dim=d,
        r=r,
        c=omega_p / omega_q,
        K=K,
        width=omega_p * r,
        p_target=p_target,
        q_target=q_target,
        universe=universe if universe is not None else 2**48,
        mode="relaxed",
    )


def _splitmix(values: np.ndarray, salt) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = values + salt
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def _compress(buckets: np.ndarray, salts: np.ndarray, multiplier, universe: int) -> np.ndarray:
    """Multiply-shift compression of bucket tuples into [0, universe).

    `buckets` is (n, K); `salts` is (K,) or (n, K) for per-row salting;
    `multiplier` is an odd scalar or an (n,) array of odd values.
    The shifted product fits in 57 bits, so the final reduction stays within
    int64 for any universe up to 2^57.
    """
    if universe > 1 << 57:
        raise ValueError("universe too large for the compression scheme")
    n, K = buckets.shape
    per_row = salts.ndim == 2
    with np.errstate(over="ignore"):
        code = np.full(n, _SPLITMIX_GAMMA, dtype=np.uint64)
        for j in range(K):
            salt_j = salts[:, j] if per_row else salts[j]
            v = _splitmix(buckets[:, j].astype(np.uint64), salt_j)
            code = _splitmix(code ^ v, salt_j)
        mixed = code * (multiplier if np.ndim(multiplier) else np.uint64(multiplier))
    return ((mixed >> np.uint64(7)).astype(np.int64)) % universe


@dataclass(frozen=True)
class LshFunction:
    """One sampled hash function: K projections plus universe compression."""

    directions: np.ndarray  # (K, d)
    offsets: np.ndarray  # (K,)
    width: float
    salts: np.ndarray  # (K,) uint64, mixes each bucket coordinate
    multiplier: int  # odd, for the multiply-shift compression
    universe: int

    def buckets(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        proj = pts @ self.directions.T + self.offsets[None, :]
        return np.floor(proj / self.width).astype(np.int64)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Hash values in [0, universe) for each point."""
        buckets = self.buckets(points)
        return _compress(buckets, self.salts, self.multiplier, self.universe)

    def serialize(self) -> bytes:
        head = json.dumps(
            {
                "width": self.width,
                "K": int(self.directions.shape[0]),
                "d": int(self.directions.shape[1]),
                "universe": int(self.universe),
                "multiplier": int(self.multiplier),
                "salts": [int(s) for s in self.salts],
            },
            sort_keys=True,
        ).encode("ascii")
        body = self.directions.astype("<f8").tobytes() + self.offsets.astype("<f8").tobytes()
        return LSH_MAGIC + struct.pack("<I", len(head)) + head + body

    @classmethod
    def deserialize(cls, blob: bytes) -> "LshFunction":
        if blob[:4] != LSH_MAGIC:
            raise ValueError("not a serialized hash function")
        (hlen,) = struct.unpack_from("<I", blob, 4)
        head = json.loads(blob[8 : 8 + hlen].decode("ascii"))
        K, d = head["K"], head["d"]
        body = blob[8 + hlen :]
        directions = np.frombuffer(body[: K * d * 8], dtype="<f8").reshape(K, d).copy()
        offsets = np.frombuffer(body[K * d * 8 : K * d * 8 + K * 8], dtype="<f8").copy()
        return cls(
            directions=directions,
            offsets=offsets,
            width=float(head["width"]),
            salts=np.array([np.uint64(s) for s in head["salts"]], dtype=np.uint64),
            multiplier=int(head["multiplier"]),
            universe=int(head["universe"]),
        )


def sample_hash(spec: LshSpec, rng: np.random.Generator) -> LshFunction:
    """Draw one function from the family; deterministic given the generator state."""
    directions = rng.standard_normal((spec.K, spec.dim))
    offsets = rng.uniform(0.0, spec.width, size=spec.K)
    salts = rng.integers(0, 2**64, size=spec.K, dtype=np.uint64)
    multiplier = int(rng.integers(0, 2**63, dtype=np.uint64)) * 2 + 1
    return LshFunction(
        directions=directions,
        offsets=offsets,
        width=spec.width,
        salts=salts,
        multiplier=multiplier,
        universe=spec.universe,
    )


def estimate_collision(
    spec: LshSpec, distance: float, trials: int, rng: np.random.Generator
) -> tuple[float, float, float]:
    """Empirical collision probability of fresh functions on pairs at `distance`.

    Returns (estimate, wilson_lo, wilson_hi).  Each trial samples a new
    function and a pair separated by `distance` along a random direction,
    and compares full compressed hash values.
    """
    if trials < MIN_COLLISION_TRIALS:
        raise ValueError(f"trials must be >= {MIN_COLLISION_TRIALS}")
    if distance == 0:
        return 1.0, 1.0, 1.0
    hits = 0
    block = 8192
    done = 0
    while done < trials:
        m = min(block, trials - done)
        g = rng.standard_normal((m, spec.K, spec.dim))
        u = rng.uniform(0.0, spec.width, size=(m, spec.K))
        base = rng.standard_normal((m, spec.dim)) * 0.25 * distance
        y = rng.standard_normal((m, spec.dim))
        dirs = y / np.maximum(np.linalg.norm(y, axis=1, keepdims=True), 1e-300)
        p0, p1 = base, base + dirs * distance
        b0 = np.floor((np.einsum("mkd,md->mk", g, p0) + u) / spec.width).astype(np.int64)
        b1 = np.floor((np.einsum("mkd,md->mk", g, p1) + u) / spec.width).astype(np.int64)
        # Compare full compressed values with per-trial compression seeds, so
        # the estimate covers the universe-compression stage too.
        salts = rng.integers(0, 2**64, size=(m, spec.K), dtype=np.uint64)
        mult = (rng.integers(0, 2**62, size=m, dtype=np.uint64) * np.uint64(2)) + np.uint64(1)
        h0 = _compress(b0, salts, mult, spec.universe)
        h1 = _compress(b1, salts, mult, spec.universe)
        hits += int(np.count_nonzero(h0 == h1))
        done += m
    phat = hits / trials
    lo, hi = wilson_interval(hits, trials)
    return phat, lo, hi


def compression_collision_bound(spec: LshSpec) -> float:
    """Analytic bound on the extra collision probability added by compression."""
    return 2.0 / spec.universe
