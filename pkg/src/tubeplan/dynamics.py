"""Coupled ego/pedestrian dynamics and stochastic rollouts.

Ego ("car"): single integrator, x_{t+1} = x_t + dt * u_t.

Environment ("pedestrian"): drift plus a repulsive interaction with the ego,

    y_{t+1} = y_t + dt * (v0 + phi(||y_t - x_t||) * e_t) + w_t,

where e_t is the unit vector from ego to pedestrian,
phi(rho) = v_max * ell_c^2 / (rho^2 + ell_c^2) is the fleeing speed, and
w_t is i.i.d. Gaussian noise. The nominal predictor ignores interaction and
propagates the drift alone: yhat_{t+1} = yhat_t + dt * v0.

All rollouts are pure functions of (policy, initial states, noise seed);
there is no shared mutable state, so concurrent use is safe.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigurationError, DegenerateGeometryError
from .seeding import generator, seed_path


def _check_finite(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{name} contains NaN or Inf")


def _norms(vecs: np.ndarray) -> np.ndarray:
    # same arithmetic for scalar and batched paths so they agree bitwise
    return np.sqrt(np.sum(vecs * vecs, axis=-1))


@dataclass
class Policy:
    """Open-loop control sequence u_{0:T-1}.

    controls has shape (T, d_u). When u_max is set, every component must
    lie in [-u_max, u_max].
    """

    controls: np.ndarray
    u_max: float | None = None

    def __post_init__(self):
        self.controls = np.asarray(self.controls, dtype=float)
        if self.controls.ndim != 2:
            raise ConfigurationError("policy controls must have shape (T, d_u)")
        _check_finite("policy controls", self.controls)
        if self.u_max is not None and np.any(np.abs(self.controls) > self.u_max + 1e-12):
            raise ConfigurationError(f"policy controls exceed bound u_max={self.u_max}")

    @property
    def horizon(self) -> int:
        return self.controls.shape[0]

    def perturbed(self, delta: np.ndarray) -> "Policy":
        """Policy with controls + delta; bounds are not enforced on probes."""
        return Policy(self.controls + np.asarray(delta, dtype=float))


def policy_distance(a: Policy, b: Policy) -> float:
    """Max over time of the Euclidean gap between controls."""
    if a.controls.shape != b.controls.shape:
        raise ConfigurationError("policies have mismatched shapes")
    if a.horizon == 0:
        return 0.0
    return float(np.max(_norms(a.controls - b.controls)))


@dataclass
class Trajectory:
    """State sequence over a horizon, states indexed 0..T, shape (T+1, d)."""

    states: np.ndarray
    kind: str = "ego"  # ego | environment | predicted

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        if self.states.ndim != 2 or self.states.shape[0] < 1:
            raise ConfigurationError("trajectory states must have shape (T+1, d)")
        _check_finite("trajectory states", self.states)

    @property
    def horizon(self) -> int:
        return self.states.shape[0] - 1

    def __len__(self) -> int:
        return self.states.shape[0]


@dataclass
class NoiseSequence:
    """T noise draws; reproducible from the seed path that generated them."""

    draws: np.ndarray
    seed: tuple[int, ...]

    def __post_init__(self):
        self.draws = np.asarray(self.draws, dtype=float)
        _check_finite("noise draws", self.draws)

    @property
    def horizon(self) -> int:
        return self.draws.shape[0]


@dataclass(eq=True)
class PedestrianModel:
    """Interaction model parameters.

    noise_scaling selects the per-step noise standard deviation:
    "sqrt-dt" gives std = sigma * sqrt(dt) (covariance dt * sigma^2 * I),
    "dt" gives std = sigma * dt.
    """

    v0: tuple[float, ...] = (-0.5, 0.0)
    v_max: float = 1.0
    ell_c: float = 1.0
    sigma: float = 0.05
    dt: float = 0.1
    noise_scaling: str = "sqrt-dt"

    def __post_init__(self):
        self.v0 = tuple(float(v) for v in self.v0)
        if self.v_max < 0:
            raise ConfigurationError("v_max must be >= 0")
        if self.ell_c <= 0:
            raise ConfigurationError("ell_c must be > 0")
        if self.sigma < 0:
            raise ConfigurationError("sigma must be >= 0")
        if self.dt <= 0:
            raise ConfigurationError("dt must be > 0")
        if self.noise_scaling not in ("sqrt-dt", "dt"):
            raise ConfigurationError(f"unknown noise_scaling {self.noise_scaling!r}")

    @cached_property
    def v0_vec(self) -> np.ndarray:
        return np.asarray(self.v0, dtype=float)

    @property
    def dim(self) -> int:
        return len(self.v0)

    @property
    def noise_std(self) -> float:
        if self.noise_scaling == "sqrt-dt":
            return self.sigma * float(np.sqrt(self.dt))
        return self.sigma * self.dt


def interaction_gain(dist: float | np.ndarray, model: PedestrianModel) -> float | np.ndarray:
    """Fleeing speed phi(rho); strictly decreasing in rho, bounded by v_max."""
    lc2 = model.ell_c * model.ell_c
    return model.v_max * lc2 / (dist * dist + lc2)


def step_ego(x: np.ndarray, u: np.ndarray, model: PedestrianModel) -> np.ndarray:
    """One ego step x + dt * u."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != u.shape:
        raise ConfigurationError(f"state/control dimension mismatch: {x.shape} vs {u.shape}")
    _check_finite("ego state", x)
    _check_finite("ego control", u)
    return x + model.dt * u


def step_pedestrian(
    y: np.ndarray, x: np.ndarray, model: PedestrianModel, w: np.ndarray
) -> np.ndarray:
    """One pedestrian step y + dt * (v0 + phi * e) + w.

    Raises DegenerateGeometryError when y == x exactly: the interaction
    direction is undefined there and silently regularizing it would mask
    planner failures.
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    if y.shape != x.shape or y.shape != w.shape:
        raise ConfigurationError("pedestrian step dimension mismatch")
    rel = y - x
    dist = _norms(rel)
    if dist == 0.0:
        raise DegenerateGeometryError("ego and pedestrian coincide; e_t undefined")
    gain = interaction_gain(dist, model)
    # written as (gain / dist) * rel so scalar and batched paths agree bitwise
    return y + model.dt * (model.v0_vec + (gain / dist) * rel) + w


def rollout(
    policy: Policy,
    x0: np.ndarray,
    y0: np.ndarray,
    noise: NoiseSequence,
    model: PedestrianModel,
) -> tuple[Trajectory, Trajectory]:
    """Simulate both agents for T steps; pure in (policy, states, noise)."""
    horizon = policy.horizon
    if noise.horizon != horizon:
        raise ConfigurationError(
            f"policy horizon {horizon} != noise horizon {noise.horizon}"
        )
    x0 = np.asarray(x0, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    xs = np.empty((horizon + 1, x0.shape[0]))
    ys = np.empty((horizon + 1, y0.shape[0]))
    xs[0] = x0
    ys[0] = y0
    for t in range(horizon):
        ys[t + 1] = step_pedestrian(ys[t], xs[t], model, noise.draws[t])
        xs[t + 1] = step_ego(xs[t], policy.controls[t], model)
    return Trajectory(xs, kind="ego"), Trajectory(ys, kind="environment")


def predict_nominal(y0: np.ndarray, model: PedestrianModel, horizon: int) -> Trajectory:
    """Interaction-blind drift prediction yhat_t = y0 + t * dt * v0."""
    if horizon < 0:
        raise ConfigurationError("horizon must be >= 0")
    y0 = np.asarray(y0, dtype=float)
    steps = np.arange(horizon + 1)[:, None] * (model.dt * model.v0_vec)[None, :]
    return Trajectory(y0[None, :] + steps, kind="predicted")


def draw_noise(model: PedestrianModel, horizon: int, root: int, *path: int) -> NoiseSequence:
    """Noise sequence for one rollout, keyed by (root, *path)."""
    rng = generator(root, *path)
    draws = rng.normal(0.0, model.noise_std, size=(horizon, model.dim))
    return NoiseSequence(draws, seed=seed_path(root, *path))


def ego_trajectory(policy: Policy, x0: np.ndarray, model: PedestrianModel) -> Trajectory:
    """Noise-free ego trajectory under an open-loop policy."""
    x0 = np.asarray(x0, dtype=float)
    xs = np.empty((policy.horizon + 1, x0.shape[0]))
    xs[0] = x0
    for t in range(policy.horizon):
        xs[t + 1] = step_ego(xs[t], policy.controls[t], model)
    return Trajectory(xs, kind="ego")


def rollout_batch(
    policy: Policy,
    x0: np.ndarray,
    y0: np.ndarray,
    noise_batch: np.ndarray,
    model: PedestrianModel,
) -> tuple[Trajectory, np.ndarray]:
    """Vectorized rollouts sharing one policy.

    noise_batch has shape (n, T, d). Returns the (shared, noise-free) ego
    trajectory and an (n, T+1, d) array of environment trajectories that is
    elementwise identical to n scalar `rollout` calls with the same noise.
    """
    noise_batch = np.asarray(noise_batch, dtype=float)
    n, horizon, dim = noise_batch.shape
    if horizon != policy.horizon:
        raise ConfigurationError("noise batch horizon mismatch")
    ego = ego_trajectory(policy, x0, model)
    ys = np.empty((n, horizon + 1, dim))
    ys[:, 0, :] = np.asarray(y0, dtype=float)[None, :]
    for t in range(horizon):
        rel = ys[:, t, :] - ego.states[t][None, :]
        dist = _norms(rel)
        if np.any(dist == 0.0):
            raise DegenerateGeometryError("ego and pedestrian coincide; e_t undefined")
        gain = interaction_gain(dist, model)
        ys[:, t + 1, :] = (
            ys[:, t, :]
            + model.dt * (model.v0_vec[None, :] + (gain / dist)[:, None] * rel)
            + noise_batch[:, t, :]
        )
    return ego, ys
