import numpy as np


from ldpcluster.lower_bound import (
    floor_experiment,
    gap_tr,
    oblivious_protocol,
    protocol_b,
)
from ldpcluster.seeds import derive_rng


def test_gap_tr_all_zeros():
    assert gap_tr(np.zeros(10, dtype=int), tau=5) == 0


def test_gap_tr_at_threshold():
    bits = np.zeros(10, dtype=int)
    bits[:5] = 1
    assert gap_tr(bits, tau=5) == 1


def test_gap_tr_undefined_between():
    bits = np.zeros(10, dtype=int)
    bits[:2] = 1
    assert gap_tr(bits, tau=5) is None


def test_decision_rule_fixed_centers():
    # A protocol stuck at {0.99, 0.98} answers 0 whenever I lands elsewhere.
    def stuck(points, rng):
        return np.array([0.99, 0.98])

    rng = derive_rng(1, "rule")
    for _ in range(50):
        out = protocol_b(np.zeros(20, dtype=int), stuck, rng)
        lo, hi = out.interval
        in_interval = (lo <= 0.99 <= hi) or (lo <= 0.98 <= hi)
        assert out.answer == int(in_interval)


def test_oblivious_all_zero_rarely_accepts():
    # Reduced-trials version of the acceptance check: Pr[answer 1] <= 2r + slack.
    rng = derive_rng(2, "obl")
    trials = 2000
    ones = sum(
        protocol_b(np.zeros(50, dtype=int), oblivious_protocol, rng).answer
        for _ in range(trials)
    )
    assert ones / trials <= 0.2 + 0.03


def test_perfect_protocol_always_accepts_full_ones():
    # Every user holds a one: an exact 2-means solver puts a center at muding.
    def exact_two_means(points, rng):
        vals = np.unique(points)
        if vals.size == 1:
            return np.array([vals[0], vals[0]])
        return np.array([vals[0], vals[-1]])

    rng = derive_rng(3, "perfect")
    bits = np.ones(64, dtype=int)
    for _ in range(40):
        out = protocol_b(bits, exact_two_means, rng)
        assert out.answer == 1


def test_cost_floor_on_errors():
    # Whenever the reduction errs on a ones-instance, the realized cost is
    # at least (r/2)^p * tau: verified per run by construction.
    def stubborn_zero(points, rng):
        return np.array([0.0, 0.0])  # never finds the planted interval value

    rng = derive_rng(4, "floor")
    n, tau = 400, 80
    bits = np.zeros(n, dtype=int)
    bits[:tau] = 1
    r = 0.1
    for _ in range(30):
        out = protocol_b(bits, stubborn_zero, rng, p=2)
        if out.answer == 0:  # an error on this instance
            assert out.cost_on_instance >= (r / 2.0) ** 2 * tau - 1e-9


def test_floor_experiment_rows_and_tau_zero_excluded():
    rng = derive_rng(5, "rows")
    rows = floor_experiment([64], oblivious_protocol, trials=50, rng=rng,
                            tau_factors=(0.01, 1.0))
    # factor 0.01 gives tau < 1 at n=64: skipped as undefined
    labels = [r["instance"] for r in rows]
    assert labels[0] == "zeros"
    assert all("tau=0" not in l for l in labels)
    for row in rows:
        assert set(row) == {
            "n", "tau", "instance", "decision_error_rate", "mean_cost", "ci95",
            "cost_floor", "floor_violations",
        }
        assert row["floor_violations"] == 0


def test_reduction_is_post_processing():
    # Structural privacy check: the reduction consumes no budget of its own;
    # its only data-dependent messages are the inner protocol's, and on the
    # all-zero input the points handed to the protocol carry no trace of I.
    seen_points = []

    def spy(points, rng):
        seen_points.append(points.copy())
        return np.array([0.5, 0.5])

    rng = derive_rng(6, "pp")
    protocol_b(np.zeros(30, dtype=int), spy, rng)
    assert np.all(seen_points[0] == 0.0)
