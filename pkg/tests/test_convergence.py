import math

import numpy as np
import pytest

from tubeplan.convergence import (
    ContractionParams,
    EtaBoundInputs,
    FixedPointTrace,
    dkw_quantile_error_mc,
    empirical_p_quantile,
    error_bound_horizon,
    error_bound_steady,
    estimate_density_floor,
    eta_bound,
    synthetic_fixed_point_run,
    uniform_unit_distribution,
)
from tubeplan.errors import ConfigurationError, TubeplanError


class TestContractionParams:
    def test_values(self):
        p = ContractionParams.from_kappa(0.2)
        assert p.gamma == pytest.approx(0.5)
        assert p.B == pytest.approx(1.25)
        assert p.contraction

    def test_threshold_at_one_third(self):
        assert ContractionParams.from_kappa(0.33).contraction
        assert not ContractionParams.from_kappa(1.0 / 3.0).contraction
        assert not ContractionParams.from_kappa(0.4).contraction

    def test_monotone_in_kappa(self):
        kappas = np.linspace(0.01, 0.95, 20)
        gammas = [ContractionParams.from_kappa(k).gamma for k in kappas]
        bs = [ContractionParams.from_kappa(k).B for k in kappas]
        assert all(a < b for a, b in zip(gammas, gammas[1:]))
        assert all(a < b for a, b in zip(bs, bs[1:]))

    def test_invalid(self):
        with pytest.raises(ConfigurationError):
            ContractionParams.from_kappa(1.0)
        with pytest.raises(ConfigurationError):
            ContractionParams.from_kappa(-0.1)


class TestErrorBoundHorizon:
    def test_pure_geometric_decay(self):
        bounds = error_bound_horizon(1.0, np.zeros(6), 0.2)  # gamma = 0.5
        assert np.allclose(bounds, [0.5 ** (j + 1) for j in range(6)])

    def test_single_perturbation(self):
        bounds = error_bound_horizon(0.0, [0.04], 0.2)
        assert bounds[0] == pytest.approx(0.04 / (1 - 0.2))

    def test_memoryless_at_kappa_zero(self):
        etas = [0.1, 0.3, 0.05]
        bounds = error_bound_horizon(1.0, etas, 0.0)
        assert np.allclose(bounds, etas)

    def test_matches_direct_sum_oracle(self):
        rng = np.random.default_rng(61)
        kappa = 0.25
        gamma = 2 * kappa / (1 - kappa)
        b = 1 / (1 - kappa)
        e0 = 0.7
        etas = rng.uniform(0, 0.1, size=12)
        bounds = error_bound_horizon(e0, etas, kappa)
        for j in range(12):
            direct = gamma ** (j + 1) * e0 + b * sum(
                gamma ** (j - m) * etas[m] for m in range(j + 1)
            )
            assert bounds[j] == pytest.approx(direct, rel=1e-12)

    def test_recursion_dominance(self):
        # any sequence obeying e+ <= gamma e + B|eta| stays under the bound
        rng = np.random.default_rng(67)
        kappa = 0.3
        p = ContractionParams.from_kappa(kappa)
        for _ in range(50):
            e0 = float(rng.uniform(0, 2))
            etas = rng.uniform(0, 0.2, size=20)
            es = [e0]
            for eta in etas:
                slack = float(rng.uniform(0, 1))
                es.append(slack * (p.gamma * es[-1] + p.B * eta))
            bounds = error_bound_horizon(e0, etas, kappa)
            assert np.all(np.asarray(es[1:]) <= bounds + 1e-12)


class TestErrorBoundSteady:
    def test_limsup_value(self):
        _, limsup = error_bound_steady(1.0, 0.1, 0.2, 10)
        assert limsup == pytest.approx(0.25)

    def test_zero_perturbation_decays(self):
        finite, _ = error_bound_steady(1.0, 0.0, 0.2, 20)
        assert finite == pytest.approx(0.5 ** 21)

    def test_finite_approaches_limsup(self):
        finite, limsup = error_bound_steady(1.0, 0.1, 0.2, 200)
        assert finite == pytest.approx(limsup, rel=1e-9)

    def test_limsup_unavailable_beyond_third(self):
        _, limsup = error_bound_steady(1.0, 0.1, 0.35, 10)
        assert limsup is None

    def test_gamma_one_linear_growth(self):
        kappa = 1.0 / 3.0
        finite, limsup = error_bound_steady(1.0, 0.1, kappa, 9)
        assert limsup is None
        assert finite == pytest.approx(1.0 + 1.5 * 0.1 * 10)


class TestEtaBound:
    def test_pure_dkw_term(self):
        inputs = EtaBoundInputs(alpha=0.1, alpha_bar=0.1, n=1000, delta_j=0.05, f_star=2.0)
        assert eta_bound(inputs) == pytest.approx(
            math.sqrt(math.log(40.0) / 2000.0) / 2.0
        )

    def test_level_shift_limit(self):
        inputs = EtaBoundInputs(
            alpha=0.1, alpha_bar=0.06, n=10**12, delta_j=0.05, f_star=1.0
        )
        assert eta_bound(inputs) == pytest.approx(0.04, abs=1e-5)

    def test_hand_value(self):
        inputs = EtaBoundInputs(
            alpha=0.1, alpha_bar=0.0613, n=1000, delta_j=0.05, f_star=1.0
        )
        assert eta_bound(inputs) == pytest.approx(0.0816, abs=2e-4)

    def test_validation(self):
        with pytest.raises(ConfigurationError):
            EtaBoundInputs(alpha=0.1, alpha_bar=0.06, n=100, delta_j=0.05, f_star=0.0)
        with pytest.raises(ConfigurationError):
            EtaBoundInputs(alpha=0.1, alpha_bar=0.06, n=0, delta_j=0.05, f_star=1.0)


def affine_map(kappa: float, r_star: float):
    return lambda r: kappa * (r - r_star) + r_star


class TestSyntheticFixedPoint:
    def test_noise_free_geometric_decay(self):
        trace = synthetic_fixed_point_run(
            affine_map(0.2, 1.0), 1.0, 0.2, 2.0, 20, lambda j, t: 0.0
        )
        # realized contraction is at least as fast as gamma = 0.5
        assert np.all(trace.e <= 0.5 ** np.arange(21) + 1e-12)
        assert trace.e[-1] < 1e-8

    def test_starts_at_fixed_point(self):
        trace = synthetic_fixed_point_run(
            affine_map(0.3, 1.0), 1.0, 0.3, 1.0, 10, lambda j, t: 0.0
        )
        assert np.all(trace.e == 0.0)

    def test_bounds_hold_with_bounded_noise(self):
        rng = np.random.default_rng(71)
        trace = synthetic_fixed_point_run(
            affine_map(0.2, 1.0),
            1.0,
            0.2,
            2.0,
            60,
            lambda j, t: float(rng.uniform(-0.05, 0.05)),
        )
        assert np.all(trace.e <= trace.bound + 1e-9)

    def test_beyond_third_bound_diverges_run_does_not(self):
        rng = np.random.default_rng(73)
        trace = synthetic_fixed_point_run(
            affine_map(0.4, 1.0),
            1.0,
            0.4,
            1.5,
            40,
            lambda j, t: float(rng.uniform(-0.05, 0.05)),
        )
        # the inequality still holds pathwise even though gamma > 1
        assert np.all(trace.e <= trace.bound + 1e-9)
        assert trace.bound[-1] > 10 * trace.e[-1]

    def test_non_fixed_point_rejected(self):
        with pytest.raises(ConfigurationError):
            synthetic_fixed_point_run(
                lambda r: r + 1.0, 1.0, 0.2, 2.0, 5, lambda j, t: 0.0
            )

    def test_violated_bound_raises(self):
        # a map that claims kappa = 0.1 but actually has slope 0.9
        with pytest.raises(TubeplanError):
            synthetic_fixed_point_run(
                affine_map(0.9, 1.0), 1.0, 0.1, 3.0, 30, lambda j, t: 0.0
            )


class TestDkwMonteCarlo:
    def test_violation_rate_within_budget(self):
        dist = uniform_unit_distribution()
        rate = dkw_quantile_error_mc(dist, n=400, level=0.9, trials=400, delta=0.05)
        se = math.sqrt(0.05 * 0.95 / 400)
        assert rate <= 0.05 + 3 * se

    def test_rate_does_not_grow_with_n(self):
        dist = uniform_unit_distribution()
        small = dkw_quantile_error_mc(dist, n=25, level=0.9, trials=300, delta=0.05)
        large = dkw_quantile_error_mc(dist, n=800, level=0.9, trials=300, delta=0.05)
        assert large <= small + 1e-9

    def test_degenerate_distribution_rejected(self):
        from tubeplan.convergence import ScoreDistribution

        point_mass = ScoreDistribution(
            name="point",
            sample=lambda rng, size: np.ones(size),
            quantile=lambda p: 1.0,
            f_star=0.0,
        )
        with pytest.raises(ConfigurationError):
            dkw_quantile_error_mc(point_mass, n=10, level=0.9, trials=10, delta=0.05)

    def test_empirical_p_quantile_matches_sort(self):
        rng = np.random.default_rng(79)
        x = rng.normal(size=57)
        for p in (0.1, 0.5, 0.9):
            k = math.ceil(57 * p)
            assert empirical_p_quantile(x, p) == sorted(x)[k - 1]


class TestLevelToQuantileLipschitz:
    def test_uniform_identity(self):
        # for U[0,1] the quantile map is the identity: |Q_p - Q_p'| = |p - p'|
        dist = uniform_unit_distribution()
        for p, p2 in ((0.9, 0.95), (0.5, 0.51), (0.1, 0.9)):
            gap = abs(dist.quantile(p) - dist.quantile(p2))
            assert gap == pytest.approx(abs(p - p2) / dist.f_star)


class TestDensityFloor:
    def test_uniform_scores(self):
        rng = np.random.default_rng(83)
        scores = rng.uniform(size=20000)
        f = estimate_density_floor(scores, 0.5, window_frac=0.1)
        assert f == pytest.approx(1.0, rel=0.15)

    def test_constant_scores(self):
        assert estimate_density_floor(np.ones(100), 1.0) == 0.0
