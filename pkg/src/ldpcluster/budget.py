"""Privacy budget accounting.

Budgets compose by plain addition of (epsilon, delta) across invocations.
The ledger stores exact rationals so that "spent <= configured" can be
checked without float drift: a step charged eps/68 exactly 17 times sums to
exactly eps/4.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    return Fraction(float(x))  # exact binary expansion of the float


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon: Fraction
    delta: Fraction

    def __post_init__(self):
        eps = _frac(self.epsilon)
        dlt = _frac(self.delta)
        if eps <= 0:
            raise ValueError("epsilon must be positive")
        if dlt < 0 or dlt >= 1:
            raise ValueError("delta must be in [0, 1)")
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "delta", dlt)

    @property
    def eps_float(self) -> float:
        return float(self.epsilon)

    @property
    def delta_float(self) -> float:
        return float(self.delta)

    def scaled(self, num: int, den: int) -> "PrivacyBudget":
        """Budget multiplied by the exact rational num/den (delta included)."""
        return PrivacyBudget(self.epsilon * num / den, self.delta * num / den)

    def covers(self, other: "PrivacyBudget") -> bool:
        return other.epsilon <= self.epsilon and other.delta <= self.delta


def compose(budgets) -> PrivacyBudget:
    """Sequential composition: sum of epsilons, sum of deltas (exact)."""
    budgets = list(budgets)
    if not budgets:
        raise ValueError("compose requires a non-empty sequence")
    eps = sum((b.epsilon for b in budgets), Fraction(0))
    dlt = sum((b.delta for b in budgets), Fraction(0))
    return PrivacyBudget(eps, dlt)


@dataclass
class BudgetLedger:
    """Append-only record of privacy spends, one row per mechanism invocation.

    Steps on disjoint user sets (parallel composition) are recorded once with
    a note instead of once per subset; the caller is responsible for charging
    at the right granularity.
    """

    entries: list[tuple[str, Fraction, Fraction]] = field(default_factory=list)
    noise_off: bool = False

    def charge(self, step: str, epsilon, delta=0) -> None:
        eps = _frac(epsilon)
        dlt = _frac(delta)
        if eps < 0 or dlt < 0:
            raise ValueError("charges must be nonnegative")
        self.entries.append((step, eps, dlt))

    def total(self) -> PrivacyBudget:
        eps = sum((e for _, e, _ in self.entries), Fraction(0))
        dlt = sum((d for _, _, d in self.entries), Fraction(0))
        if eps == 0:
            eps = Fraction(1, 10**12)  # empty ledger: report a token budget
        return PrivacyBudget(eps, dlt)

    def within(self, configured: PrivacyBudget) -> bool:
        if self.noise_off:
            return False  # a noise-free run is not private, never certify it
        return configured.covers(self.total())

    def write_csv(self, path: str | Path) -> None:
        path = Path(path)
        with path.open("w", encoding="ascii", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["step", "epsilon", "delta"])
            for step, eps, dlt in self.entries:
                writer.writerow([step, f"{float(eps):.12g}", f"{float(dlt):.12g}"])
            total = self.total()
            writer.writerow(
                ["TOTAL", f"{total.eps_float:.12g}", f"{total.delta_float:.12g}"]
            )
            if self.noise_off:
                writer.writerow(["NOISE_OFF", "nan", "nan"])
