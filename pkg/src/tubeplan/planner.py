"""Robust episodic planner for the tube-tightened collision constraint.

Solves, for a given radius r,

    min_u  w_goal * ||x_T - x_goal||^2 + w_track * sum_t ||u_t||^2
    s.t.   x_{t+1} = x_t + dt * u_t,   |u_{t,i}| <= u_max,
           ||x_t - yhat_t||_2 >= d_min + r   for t = 0..T.

The distance constraint is nonconvex (complement of a ball), so the solver
uses penalty continuation: minimize cost + mu * sum_t hinge(violation_t)^2
by projected gradient descent with backtracking, then escalate mu. The
decision variable has only T * d_u entries, the method is deterministic
given (inputs, warm start), and warm starting across episodes keeps the
realized solution map near-continuous in r.

x_0 is fixed: when x_0 itself violates the tightened constraint the
instance is infeasible regardless of the policy, and the result says so
while still returning the best-effort iterate for the remaining steps.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dynamics import PedestrianModel, Policy, Trajectory, _norms, ego_trajectory
from .errors import ConfigurationError


@dataclass(eq=True)
class PlannerConfig:
    """Cost weights, constraint data, and solver tolerances."""

    x_goal: tuple[float, ...] = (6.0, 0.5)
    w_goal: float = 1.0
    w_track: float = 1e-4
    d_min: float = 0.8
    u_max: float = 2.0
    horizon: int = 5
    dt: float = 0.1
    tol_feas: float = 1e-6
    grad_tol: float = 1e-8
    max_inner: int = 5000
    n_stages: int = 8
    penalty_init: float = 10.0
    penalty_growth: float = 10.0

    def __post_init__(self):
        self.x_goal = tuple(float(v) for v in self.x_goal)
        if self.d_min <= 0:
            raise ConfigurationError("d_min must be > 0")
        if self.u_max <= 0:
            raise ConfigurationError("u_max must be > 0")
        if self.w_goal < 0 or self.w_track < 0:
            raise ConfigurationError("cost weights must be >= 0")
        if self.horizon < 1:
            raise ConfigurationError("horizon must be >= 1")
        if self.dt <= 0:
            raise ConfigurationError("dt must be > 0")


@dataclass
class PlanResult:
    policy: Policy
    ego_traj: Trajectory
    cost: float
    feasible: bool
    constraint_slack: float
    iterations: int
    stages: int


def safety_eval(x_traj, y_traj, d_min: float) -> float:
    """max_t (d_min - ||x_t - y_t||); <= 0 means the pair is safe."""
    xs = x_traj.states if isinstance(x_traj, Trajectory) else np.asarray(x_traj, float)
    ys = y_traj.states if isinstance(y_traj, Trajectory) else np.asarray(y_traj, float)
    if xs.shape != ys.shape:
        raise ConfigurationError("safety_eval trajectory length mismatch")
    return float(np.max(d_min - _norms(xs - ys)))


def safety_eval_batch(x_traj, y_batch: np.ndarray, d_min: float) -> np.ndarray:
    """Safety values of one ego trajectory against an (n, T+1, d) stack."""
    xs = x_traj.states if isinstance(x_traj, Trajectory) else np.asarray(x_traj, float)
    y_batch = np.asarray(y_batch, dtype=float)
    return np.max(d_min - _norms(y_batch - xs[None, :, :]), axis=1)


def feasibility_sufficient(
    r: float, y_hat, x_traj, d_min: float, l_h: float = 1.0
) -> bool:
    """True when the margin against the prediction certifies feasibility.

    The safety function here is 1-Lipschitz in the environment trajectory
    (l_h = 1), so a clearance of l_h * r against the prediction covers every
    trajectory in the tube: H(x, yhat) <= -l_h * r.
    """
    if l_h < 0:
        raise ConfigurationError("l_h must be >= 0")
    return safety_eval(x_traj, y_hat, d_min) <= -l_h * r


def _cost_and_grad(
    u_flat: np.ndarray,
    x0: np.ndarray,
    yh: np.ndarray,
    cfg: PlannerConfig,
    required: float,
    mu: float,
    want_grad: bool,
):
    horizon, dim = yh.shape[0] - 1, yh.shape[1]
    u = u_flat.reshape(horizon, dim)
    xs = np.empty((horizon + 1, dim))
    xs[0] = x0
    np.cumsum(u, axis=0, out=xs[1:])
    xs[1:] *= cfg.dt
    xs[1:] += x0[None, :]

    diffs = xs - yh
    dist = _norms(diffs)
    viol = np.maximum(0.0, required - dist)
    viol[0] = 0.0  # x_0 fixed; handled by the caller's feasibility check

    terminal = xs[-1] - np.asarray(cfg.x_goal)
    cost = cfg.w_goal * float(terminal @ terminal) + cfg.w_track * float(
        np.sum(u * u)
    )
    value = cost + mu * float(np.sum(viol * viol))
    if not want_grad:
        return value, cost, None

    grad_x = np.zeros_like(xs)
    grad_x[-1] += 2.0 * cfg.w_goal * terminal
    active = viol > 0.0
    if np.any(active):
        inv = np.zeros_like(dist)
        nonzero = dist > 0.0
        inv[nonzero] = 1.0 / dist[nonzero]
        coef = -2.0 * mu * viol * inv  # d/dx of hinge^2 through -||x - yhat||
        grad_x += (coef * active)[:, None] * diffs
    # chain rule through x_t = x0 + dt * sum_{i<t} u_i
    tail = np.cumsum(grad_x[1:][::-1], axis=0)[::-1]
    grad_u = cfg.dt * tail + 2.0 * cfg.w_track * u
    return value, cost, grad_u.ravel()


def _pgd_stage(
    u_flat: np.ndarray,
    x0: np.ndarray,
    yh: np.ndarray,
    cfg: PlannerConfig,
    required: float,
    mu: float,
) -> tuple[np.ndarray, int, bool]:
    """One penalty stage; returns (iterate, iterations, converged)."""
    bound = cfg.u_max
    step = 1.0
    value, _, grad = _cost_and_grad(u_flat, x0, yh, cfg, required, mu, True)
    for it in range(cfg.max_inner):
        while True:
            cand = np.clip(u_flat - step * grad, -bound, bound)
            delta = cand - u_flat
            cand_value, _, _ = _cost_and_grad(cand, x0, yh, cfg, required, mu, False)
            sufficient = value + float(grad @ delta) + float(delta @ delta) / (2.0 * step)
            if cand_value <= sufficient + 1e-15 or step < 1e-18:
                break
            step *= 0.5
        pg_norm = float(np.max(np.abs(delta))) / step if step > 0 else 0.0
        u_flat = cand
        value, _, grad = _cost_and_grad(u_flat, x0, yh, cfg, required, mu, True)
        if pg_norm <= cfg.grad_tol:
            return u_flat, it + 1, True
        step = min(step * 2.0, 1e6)
    return u_flat, cfg.max_inner, False


def solve(
    r: float,
    y_hat,
    x0,
    cfg: PlannerConfig,
    model: PedestrianModel | None = None,
    warm_start: Policy | None = None,
) -> PlanResult:
    """Solve the tightened program at radius r.

    Deterministic given identical (r, y_hat, x0, cfg, warm_start). When the
    tightened constraints cannot be met the result carries feasible=False
    and the best-effort iterate; it never fails silently.
    """
    if not np.isfinite(r) or r < 0:
        raise ConfigurationError(f"radius must be finite and >= 0, got {r}")
    yh = y_hat.states if isinstance(y_hat, Trajectory) else np.asarray(y_hat, float)
    x0 = np.asarray(x0, dtype=float)
    if not np.all(np.isfinite(yh)) or not np.all(np.isfinite(x0)):
        raise ConfigurationError("planner inputs contain NaN or Inf")
    if yh.shape[0] != cfg.horizon + 1:
        raise ConfigurationError(
            f"prediction has {yh.shape[0]} states, expected horizon+1={cfg.horizon + 1}"
        )
    if warm_start is not None and warm_start.horizon != cfg.horizon:
        raise ConfigurationError("warm start horizon mismatch")

    required = cfg.d_min + r
    if warm_start is not None:
        u = np.clip(warm_start.controls.astype(float).copy(), -cfg.u_max, cfg.u_max)
    else:
        u = np.zeros((cfg.horizon, yh.shape[1]))
    u_flat = u.ravel()

    total_iters = 0
    stages_run = 0
    mu = cfg.penalty_init
    for _ in range(cfg.n_stages):
        u_flat, iters, converged = _pgd_stage(u_flat, x0, yh, cfg, required, mu)
        total_iters += iters
        stages_run += 1
        value, cost, _ = _cost_and_grad(u_flat, x0, yh, cfg, required, mu, False)
        # strictly feasible stationary points do not move under larger mu
        if converged and value == cost:
            break
        mu *= cfg.penalty_growth

    if model is not None and model.dt != cfg.dt:
        raise ConfigurationError("model.dt differs from planner dt")
    sim_model = model if model is not None else PedestrianModel(
        v0=(0.0,) * yh.shape[1], dt=cfg.dt
    )
    policy = Policy(u_flat.reshape(cfg.horizon, yh.shape[1]).copy(), u_max=cfg.u_max)
    ego = ego_trajectory(policy, x0, sim_model)
    slack = float(np.min(_norms(ego.states - yh) - required))
    _, cost, _ = _cost_and_grad(u_flat, x0, yh, cfg, required, 0.0, False)
    feasible = slack >= -cfg.tol_feas
    return PlanResult(
        policy=policy,
        ego_traj=ego,
        cost=cost,
        feasible=feasible,
        constraint_slack=slack,
        iterations=total_iters,
        stages=stages_run,
    )
