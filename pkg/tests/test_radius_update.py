import math

import numpy as np
import pytest

from tubeplan.dynamics import Policy
from tubeplan.errors import ConfigurationError, InvalidGainError, NoSafeRadiusError
from tubeplan.radius_update import (
    RadiusInterval,
    UpdateOutcome,
    explicit_update,
    implicit_update,
    project,
)


class TestExplicitUpdate:
    def test_fixed_point(self):
        for kappa in (0.0, 0.3, 0.9):
            out = explicit_update(1.5, 1.5, kappa)
            assert out.r_next == pytest.approx(1.5)

    def test_shrinkage_hand_value(self):
        out = explicit_update(1.0, 2.0, 0.5)
        assert out.branch == "shrinkage"
        assert out.r_next == pytest.approx(4.0 / 3.0)
        # minimality: the inequality saturates exactly
        assert out.r_next == pytest.approx(1.0 + 0.5 * (2.0 - out.r_next), abs=1e-12)

    def test_expansion_hand_value(self):
        out = explicit_update(2.0, 1.0, 0.5)
        assert out.branch == "expansion"
        assert out.r_next == pytest.approx(3.0)
        assert out.r_next == pytest.approx(2.0 + 0.5 * (out.r_next - 1.0), abs=1e-12)

    def test_kappa_zero_pure_recalibration(self):
        assert explicit_update(0.7, 2.0, 0.0).r_next == 0.7
        assert explicit_update(2.0, 0.7, 0.0).r_next == 2.0

    def test_invalid_gain(self):
        for kappa in (1.0, 1.5, -0.01):
            with pytest.raises(InvalidGainError):
                explicit_update(1.0, 1.0, kappa)

    def test_negative_inputs_rejected(self):
        with pytest.raises(ConfigurationError):
            explicit_update(-0.1, 1.0, 0.5)

    def test_minimality_against_grid_oracle(self):
        rng = np.random.default_rng(41)
        step = 1e-6
        for _ in range(500):
            q = float(rng.uniform(0, 10))
            r = float(rng.uniform(0, 10))
            kappa = float(rng.uniform(0, 0.99))
            out = explicit_update(q, r, kappa)
            assert abs(out.r_next - q - kappa * abs(out.r_next - r)) <= 1e-9
            grid = out.r_next + np.arange(-1500, 1501) * step
            feasible = grid[grid >= q + kappa * np.abs(grid - r)]
            assert feasible.size > 0
            assert abs(float(feasible.min()) - out.r_next) <= 2e-6

    def test_theorem2_stability_properties(self):
        rng = np.random.default_rng(43)
        for _ in range(2000):
            q = float(rng.uniform(0, 10))
            r = float(rng.uniform(0, 10))
            kappa = float(rng.uniform(0, 0.99))
            out = explicit_update(q, r, kappa)
            assert abs(out.r_next - r) <= abs(q - r) / (1 - kappa) + 1e-12
            if q < r:
                assert out.r_next < r

    def test_branch_consistency(self):
        rng = np.random.default_rng(47)
        for _ in range(500):
            q = float(rng.uniform(0, 5))
            r = float(rng.uniform(0, 5))
            kappa = float(rng.uniform(0, 0.95))
            out = explicit_update(q, r, kappa)
            if q <= r:
                assert out.branch == "shrinkage" and out.r_next <= r + 1e-15
            else:
                assert out.branch == "expansion" and out.r_next > r

    def test_slack_invariant(self):
        rng = np.random.default_rng(53)
        for _ in range(500):
            out = explicit_update(
                float(rng.uniform(0, 10)),
                float(rng.uniform(0, 10)),
                float(rng.uniform(0, 0.99)),
            )
            assert out.slack >= -1e-9


class TestProject:
    def test_inside_unchanged(self):
        assert project(1.0, RadiusInterval(0.1, 3.0)) == 1.0

    def test_below_clamps_to_min(self):
        assert project(0.05, RadiusInterval(0.1, 3.0)) == 0.1

    def test_above_clamps_to_max(self):
        assert project(5.0, RadiusInterval(0.1, 3.0)) == 3.0

    def test_invalid_interval(self):
        with pytest.raises(ConfigurationError):
            RadiusInterval(2.0, 1.0)
        with pytest.raises(ConfigurationError):
            RadiusInterval(-0.5, 1.0)


def stub_planner(coef: float):
    """pi*(r) = coef * r along the first control axis."""

    class _Result:
        def __init__(self, r):
            self.feasible = True
            self.policy = Policy(np.array([[coef * r, 0.0]]))

    def solve_at(r, warm):
        return _Result(r)

    return solve_at


def constant_planner(policy: Policy):
    class _Result:
        def __init__(self):
            self.feasible = True
            self.policy = policy

    def solve_at(r, warm):
        return _Result()

    return solve_at


class TestImplicitUpdate:
    def test_beta_zero_returns_low_end(self):
        pi_prev = Policy(np.array([[0.3, 0.0]]))
        out = implicit_update(
            0.8, 1.0, pi_prev, 0.0, RadiusInterval(0.5, 10.0), 1e-4, stub_planner(2.0)
        )
        assert out.r_next == 0.8
        assert out.branch == "bisection"
        assert out.probes == 1

    def test_low_end_is_r_min_when_q_below(self):
        pi_prev = Policy(np.array([[0.0, 0.0]]))
        out = implicit_update(
            0.1, 1.0, pi_prev, 0.0, RadiusInterval(0.5, 10.0), 1e-4, stub_planner(1.0)
        )
        assert out.r_next == 0.5

    def test_constant_policy_map(self):
        pi_prev = Policy(np.array([[0.7, -0.2]]))
        out = implicit_update(
            0.9, 2.0, pi_prev, 5.0, RadiusInterval(0.0, 10.0), 1e-4,
            constant_planner(pi_prev),
        )
        assert out.r_next == pytest.approx(0.9, abs=1e-12)

    def test_linear_stub_matches_explicit(self):
        rng = np.random.default_rng(59)
        tol = 1e-4
        for _ in range(50):
            q = float(rng.uniform(0, 5))
            r_prev = float(rng.uniform(0, 5))
            kappa = float(rng.uniform(0, 0.9))
            coef = float(rng.uniform(0.1, 2.0))
            beta = kappa / coef
            pi_prev = Policy(np.array([[coef * r_prev, 0.0]]))
            got = implicit_update(
                q, r_prev, pi_prev, beta, RadiusInterval(0.0, 60.0), tol,
                stub_planner(coef),
            )
            want = explicit_update(q, r_prev, kappa).r_next
            assert abs(got.r_next - want) <= tol + 1e-9
            assert got.slack >= -1e-12

    def test_probe_count_bound(self):
        q, r_prev, coef, beta = 0.5, 3.0, 1.0, 0.5
        interval = RadiusInterval(0.0, 8.0)
        tol = 1e-4
        pi_prev = Policy(np.array([[coef * r_prev, 0.0]]))
        out = implicit_update(q, r_prev, pi_prev, beta, interval, tol, stub_planner(coef))
        bisection_budget = math.ceil(math.log2((interval.r_max - q) / tol))
        assert out.probes <= bisection_budget + 2  # plus the two bracket checks

    def test_no_safe_radius(self):
        # policy jumps by 100 regardless of r: q + beta * 100 > r_max always
        far = Policy(np.array([[100.0, 0.0]]))
        pi_prev = Policy(np.array([[0.0, 0.0]]))
        with pytest.raises(NoSafeRadiusError):
            implicit_update(
                0.5, 1.0, pi_prev, 1.0, RadiusInterval(0.0, 5.0), 1e-4,
                constant_planner(far),
            )

    def test_q_above_interval(self):
        pi_prev = Policy(np.array([[0.0, 0.0]]))
        with pytest.raises(NoSafeRadiusError):
            implicit_update(
                7.0, 1.0, pi_prev, 0.0, RadiusInterval(0.0, 5.0), 1e-4, stub_planner(1.0)
            )

    def test_infinite_interval_rejected(self):
        pi_prev = Policy(np.array([[0.0, 0.0]]))
        with pytest.raises(ConfigurationError):
            implicit_update(
                0.5, 1.0, pi_prev, 0.1, RadiusInterval(0.0), 1e-4, stub_planner(1.0)
            )

    def test_infeasible_probe_treated_as_unsafe(self):
        # planner infeasible below a threshold; bisection converges from above
        class _Result:
            def __init__(self, r, feasible):
                self.feasible = feasible
                self.policy = Policy(np.array([[0.0, 0.0]]))

        def solve_at(r, warm):
            return _Result(r, feasible=r >= 2.0)

        pi_prev = Policy(np.array([[0.0, 0.0]]))
        out = implicit_update(
            0.5, 1.0, pi_prev, 0.0, RadiusInterval(0.0, 5.0), 1e-4, solve_at
        )
        assert out.r_next == pytest.approx(2.0, abs=1e-3)
