"""Coupling and planner sensitivity: beta_T, L_U, and the gain kappa.

beta_T bounds how far the environment trajectory can move per unit
sup-norm change of the policy; L_U bounds how far the optimal policy moves
per unit change of the tube radius. Their product kappa = beta_T * L_U is
the closed-loop gain of the radius recursion: kappa < 1 validates the
explicit update, kappa < 1/3 gives geometric convergence.

The analytic beta_T comes from unrolling the Lipschitz recursions of the
coupled dynamics:

    A_T    = L_Xu * sum_{t=0}^{T-1} L_Xx^t
    beta_T = (L_Yx * A_T + L_Yu) * sum_{t=0}^{T-1} L_Yy^t

Empirical estimates use symmetric finite differences with common random
numbers: each +/- pair of rollouts shares one noise sequence, otherwise
the difference would measure noise instead of sensitivity.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dynamics import (
    NoiseSequence,
    PedestrianModel,
    Policy,
    policy_distance,
    rollout,
    _norms,
)
from .errors import ConfigurationError, SensitivityUnavailableError
from .seeding import STREAM_BETA_PROBE, generator, seed_path


@dataclass(eq=True)
class SensitivityConstants:
    """Certified Lipschitz constants of the coupled step maps."""

    L_Xx: float = 1.0
    L_Xu: float = 0.1
    L_Yy: float = 1.1
    L_Yx: float = 0.1
    L_Yu: float = 0.0

    def __post_init__(self):
        for name in ("L_Xx", "L_Xu", "L_Yy", "L_Yx", "L_Yu"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0")


@dataclass(eq=True)
class SensitivityConfig:
    """Finite-difference step sizes and probe counts."""

    beta_probes: int = 8
    beta_step: float = 0.1  # ||delta_pi||_inf used for +/- rollout pairs
    lu_step: float = 0.01  # radius perturbation for the planner difference
    beta_mode: str = "empirical"  # "empirical" | "analytic"
    constants: SensitivityConstants = field(default_factory=SensitivityConstants)

    def __post_init__(self):
        if self.beta_probes < 1:
            raise ConfigurationError("beta_probes must be >= 1")
        if self.beta_step <= 0 or self.lu_step <= 0:
            raise ConfigurationError("finite-difference steps must be > 0")
        if self.beta_mode not in ("empirical", "analytic"):
            raise ConfigurationError(f"unknown beta_mode {self.beta_mode!r}")


@dataclass(frozen=True)
class KappaResult:
    """Gain value and regime markers for the radius update."""

    value: float
    update_valid: bool  # kappa < 1: explicit update well defined
    contraction: bool  # kappa < 1/3: geometric convergence regime


def geometric_partial_sum(ratio: float, terms: int) -> float:
    """sum_{t=0}^{terms-1} ratio^t, stable at ratio = 1."""
    if terms < 0:
        raise ConfigurationError("terms must be >= 0")
    if ratio == 1.0:
        return float(terms)
    return float((1.0 - ratio**terms) / (1.0 - ratio))


def beta_T_analytic(consts: SensitivityConstants, horizon: int) -> tuple[float, float]:
    """Closed-form (A_T, beta_T) for a horizon-T rollout."""
    if horizon < 1:
        raise ConfigurationError("horizon must be >= 1")
    a_t = consts.L_Xu * geometric_partial_sum(consts.L_Xx, horizon)
    beta = (consts.L_Yx * a_t + consts.L_Yu) * geometric_partial_sum(
        consts.L_Yy, horizon
    )
    return a_t, beta


@dataclass
class SimContext:
    """What the finite-difference probes need from a simulator.

    env_rollout maps (policy, noise) to an (T+1, d) array of environment
    states; control_dim/noise_dim/noise_std describe the probe geometry.
    """

    env_rollout: Callable[[Policy, "object"], np.ndarray]
    horizon: int
    control_dim: int
    noise_dim: int
    noise_std: float


def pedestrian_context(model: PedestrianModel, x0, y0, horizon: int) -> SimContext:
    """SimContext backed by the coupled car-pedestrian dynamics."""

    def env_rollout(pi: Policy, noise) -> np.ndarray:
        _, env = rollout(pi, x0, y0, noise, model)
        return env.states

    return SimContext(
        env_rollout=env_rollout,
        horizon=horizon,
        control_dim=model.dim,
        noise_dim=model.dim,
        noise_std=model.noise_std,
    )


def beta_T_empirical(
    pi: Policy,
    ctx: SimContext,
    n_probe: int,
    magnitude: float,
    root: int,
    episode: int = 0,
    dpi: np.ndarray | None = None,
) -> float:
    """Finite-difference coupling sensitivity, max over probe directions.

    Each probe perturbs all controls by `magnitude` along one random unit
    direction (so ||delta_pi||_inf = magnitude exactly) and rolls out the
    +/- policies under one shared noise sequence. An explicit perturbation
    dpi (shape (T, d_u)) replaces the random directions when given.
    """
    if magnitude <= 0:
        raise ConfigurationError("perturbation magnitude must be > 0")
    horizon = pi.horizon
    if dpi is not None:
        dpi = np.asarray(dpi, dtype=float)
        gap_inf = float(np.max(_norms(dpi))) if dpi.size else 0.0
        if gap_inf == 0.0:
            raise ConfigurationError("perturbation policy must be nonzero")
    dir_rng = generator(root, STREAM_BETA_PROBE, episode)
    best = 0.0
    for i in range(n_probe):
        if dpi is not None:
            delta, denom = dpi, gap_inf
        else:
            direction = dir_rng.normal(size=ctx.control_dim)
            norm = float(np.sqrt(np.sum(direction * direction)))
            if norm == 0.0:  # pragma: no cover - measure zero
                continue
            delta = np.tile(magnitude * direction / norm, (horizon, 1))
            denom = magnitude
        noise = _probe_noise(ctx, root, episode, i)
        y_plus = ctx.env_rollout(pi.perturbed(delta), noise)
        y_minus = ctx.env_rollout(pi.perturbed(-delta), noise)
        gap = float(np.max(_norms(np.asarray(y_plus) - np.asarray(y_minus))))
        best = max(best, gap / (2.0 * denom))
    return best


def _probe_noise(ctx: SimContext, root: int, episode: int, probe: int) -> NoiseSequence:
    """Common-random-numbers noise shared by one +/- rollout pair."""
    rng = generator(root, STREAM_BETA_PROBE, episode, probe)
    draws = rng.normal(0.0, ctx.noise_std, size=(ctx.horizon, ctx.noise_dim))
    return NoiseSequence(draws, seed=seed_path(root, STREAM_BETA_PROBE, episode, probe))


def L_U_empirical(
    r: float,
    h: float,
    solve_at: Callable[[float, Policy | None], "object"],
    warm_start: Policy | None = None,
) -> float:
    """Local planner sensitivity ||pi*(r+h) - pi*(r-h)||_inf / (2h).

    Both solves share the same warm start so the difference reflects the
    radius change only.
    """
    if h <= 0:
        raise ConfigurationError("finite-difference step h must be > 0")
    if r - h < 0:
        raise ConfigurationError(f"r - h = {r - h} < 0; shrink h")
    plus = solve_at(r + h, warm_start)
    minus = solve_at(r - h, warm_start)
    if not (plus.feasible and minus.feasible):
        raise SensitivityUnavailableError(
            f"planner infeasible at r+h or r-h (r={r}, h={h})"
        )
    return policy_distance(plus.policy, minus.policy) / (2.0 * h)


def kappa(beta_t: float, l_u: float) -> KappaResult:
    """Closed-loop gain kappa = beta_T * L_U with regime markers."""
    if beta_t < 0 or l_u < 0:
        raise ConfigurationError("beta_T and L_U must be >= 0")
    value = beta_t * l_u
    return KappaResult(value=value, update_valid=value < 1.0, contraction=value < 1.0 / 3.0)
