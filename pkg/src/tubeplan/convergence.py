"""Contraction diagnostics for the radius recursion.

With gain kappa < 1 the explicit update obeys the one-step recursion
e_{j+1} <= gamma * e_j + B * |eta_j| around a fixed point r* of the
radius-to-quantile map, where

    gamma = 2 * kappa / (1 - kappa),    B = 1 / (1 - kappa),

and eta_j = q_j - T(r_j) is the calibration perturbation. gamma < 1 exactly
when kappa < 1/3. Unrolling gives the finite-horizon bound

    e_{j+1} <= gamma^{j+1} * e_0 + B * sum_m gamma^{j-m} * |eta_m|,

with steady state C / (1 - 3 kappa) under |eta| <= C. The eta itself is
controlled by a level-shift term |alpha - alpha_bar| / f_star plus a DKW
empirical-quantile term, both scaled by a density floor f_star near the
quantile.

The synthetic testbed here drives the actual update rule with a known
kappa-Lipschitz map and injected perturbations, and checks the bounds
pathwise. The DKW Monte Carlo checks the empirical-quantile error bound on
a known distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError, TubeplanError
from .radius_update import explicit_update
from .seeding import STREAM_SYNTHETIC, generator


@dataclass(frozen=True)
class ContractionParams:
    """Derived contraction constants for a given gain."""

    kappa: float
    gamma: float
    B: float
    contraction: bool

    @classmethod
    def from_kappa(cls, kappa: float) -> "ContractionParams":
        if not 0.0 <= kappa < 1.0:
            raise ConfigurationError(f"kappa must be in [0, 1), got {kappa}")
        gamma = 2.0 * kappa / (1.0 - kappa)
        return cls(kappa=kappa, gamma=gamma, B=1.0 / (1.0 - kappa), contraction=gamma < 1.0)


@dataclass(frozen=True)
class EtaBoundInputs:
    alpha: float
    alpha_bar: float
    n: int
    delta_j: float
    f_star: float

    def __post_init__(self):
        if self.f_star <= 0:
            raise ConfigurationError("f_star must be > 0")
        if self.n < 1:
            raise ConfigurationError("n must be >= 1")
        if not 0 < self.delta_j < 1:
            raise ConfigurationError("delta_j must be in (0, 1)")


def error_bound_horizon(e0: float, etas, kappa: float) -> np.ndarray:
    """Unrolled bounds: entry j bounds e_{j+1} given |eta_0..eta_j|."""
    params = ContractionParams.from_kappa(kappa)
    etas = np.abs(np.asarray(etas, dtype=float))
    bounds = np.empty(etas.size)
    b = float(e0)
    for j, eta in enumerate(etas):
        b = params.gamma * b + params.B * eta
        bounds[j] = b
    return bounds


def error_bound_steady(
    e0: float, c_bound: float, kappa: float, j: int
) -> tuple[float, float | None]:
    """(finite-horizon bound on e_{j+1}, steady-state bound or None).

    The steady state C / (1 - 3 kappa) exists only for kappa < 1/3; it is
    returned as None otherwise.
    """
    params = ContractionParams.from_kappa(kappa)
    if j < 0:
        raise ConfigurationError("j must be >= 0")
    if c_bound < 0:
        raise ConfigurationError("c_bound must be >= 0")
    gamma = params.gamma
    if abs(1.0 - gamma) < 1e-9:
        # closed form cancels catastrophically near gamma = 1; sum directly
        geom = float(np.sum(gamma ** np.arange(j + 1)))
    else:
        geom = (1.0 - gamma ** (j + 1)) / (1.0 - gamma)
    finite = gamma ** (j + 1) * e0 + params.B * c_bound * geom
    limsup = c_bound / (1.0 - 3.0 * kappa) if params.contraction else None
    return finite, limsup


def eta_bound(inputs: EtaBoundInputs) -> float:
    """Level-shift plus DKW term: |alpha - alpha_bar|/f* + sqrt(ln(2/d)/2n)/f*."""
    level_shift = abs(inputs.alpha - inputs.alpha_bar) / inputs.f_star
    dkw = math.sqrt(math.log(2.0 / inputs.delta_j) / (2.0 * inputs.n)) / inputs.f_star
    return level_shift + dkw


@dataclass
class FixedPointTrace:
    """Trace of the synthetic recursion: radii, errors, perturbations, bounds."""

    r: np.ndarray  # length episodes + 1
    e: np.ndarray  # length episodes + 1
    eta: np.ndarray  # length episodes
    bound: np.ndarray  # length episodes + 1; bound[0] = e0


def synthetic_fixed_point_run(
    t_map: Callable[[float], float],
    r_star: float,
    kappa: float,
    r0: float,
    episodes: int,
    eta_injector: Callable[[int, float], float],
    check: bool = True,
) -> FixedPointTrace:
    """Drive the explicit update with q_j = T(r_j) + eta_j and track errors.

    t_map must be kappa-Lipschitz with fixed point r_star (e.g. the affine
    map r -> kappa * (r - r_star) + r_star); eta_injector(j, T(r_j)) returns
    the injected perturbation. With check=True a violated bound raises.
    """
    if episodes < 1:
        raise ConfigurationError("episodes must be >= 1")
    fp = t_map(r_star)
    if abs(fp - r_star) > 1e-9:
        raise ConfigurationError(f"t_map({r_star}) = {fp} is not a fixed point")
    r = float(r0)
    rs = [r]
    etas = []
    for j in range(episodes):
        t_r = t_map(r)
        eta = float(eta_injector(j, t_r))
        q = t_r + eta
        if q < 0:
            raise ConfigurationError(f"perturbed quantile q={q} < 0 at episode {j}")
        r = explicit_update(q, r, kappa).r_next
        rs.append(r)
        etas.append(eta)
    rs = np.asarray(rs)
    es = np.abs(rs - r_star)
    bounds = np.concatenate(([es[0]], error_bound_horizon(es[0], etas, kappa)))
    if check:
        bad = np.nonzero(es > bounds + 1e-9)[0]
        if bad.size:
            j = int(bad[0])
            raise TubeplanError(
                f"error bound violated at step {j}: e={es[j]:.6g} > bound={bounds[j]:.6g}"
            )
    return FixedPointTrace(r=rs, e=es, eta=np.asarray(etas), bound=bounds)


@dataclass(frozen=True)
class ScoreDistribution:
    """Known score law for Monte-Carlo quantile experiments."""

    name: str
    sample: Callable[[np.random.Generator, tuple], np.ndarray]
    quantile: Callable[[float], float]
    f_star: float  # density lower bound near the quantile of interest


def uniform_unit_distribution() -> ScoreDistribution:
    return ScoreDistribution(
        name="uniform[0,1]",
        sample=lambda rng, size: rng.uniform(0.0, 1.0, size=size),
        quantile=lambda p: p,
        f_star=1.0,
    )


def empirical_p_quantile(samples: np.ndarray, level: float, axis: int = -1) -> np.ndarray:
    """inf{t : F_n(t) >= p}, i.e. the ceil(n * p)-th order statistic."""
    n = samples.shape[axis]
    k = math.ceil(n * level - 1e-9)
    if not 1 <= k <= n:
        raise ConfigurationError(f"level {level} has no order statistic for n={n}")
    return np.partition(samples, k - 1, axis=axis).take(k - 1, axis=axis)


def dkw_quantile_error_mc(
    dist: ScoreDistribution,
    n: int,
    level: float,
    trials: int,
    delta: float,
    root: int = 0,
) -> float:
    """Fraction of trials whose empirical quantile error exceeds the DKW bound.

    The bound is eps_n(delta) / f_star with eps_n = sqrt(ln(2/delta) / 2n);
    the returned violation rate should not exceed delta (it is typically far
    smaller because DKW is uniform over the whole CDF).
    """
    if dist.f_star <= 0:
        raise ConfigurationError("distribution has no positive density floor")
    if trials < 1 or n < 1:
        raise ConfigurationError("trials and n must be >= 1")
    eps = math.sqrt(math.log(2.0 / delta) / (2.0 * n))
    threshold = eps / dist.f_star
    q_true = dist.quantile(level)
    rng = generator(root, STREAM_SYNTHETIC)
    violations = 0
    chunk = max(1, min(trials, 4_000_000 // max(n, 1)))
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        samples = dist.sample(rng, (m, n))
        q_hat = empirical_p_quantile(samples, level, axis=1)
        violations += int(np.sum(np.abs(q_hat - q_true) > threshold))
        done += m
    return violations / trials


def estimate_density_floor(scores, q: float, window_frac: float = 0.1) -> float:
    """Crude density estimate near q: finite difference of the empirical CDF
    over a window sized as a fraction of the score range. Returns 0.0 when
    the window degenerates (e.g. constant scores)."""
    arr = np.sort(np.asarray(scores, dtype=float).ravel())
    if arr.size < 2:
        return 0.0
    span = float(arr[-1] - arr[0])
    width = window_frac * span
    if width <= 0:
        return 0.0
    lo = np.searchsorted(arr, q - 0.5 * width, side="left")
    hi = np.searchsorted(arr, q + 0.5 * width, side="right")
    return float((hi - lo) / arr.size / width)
