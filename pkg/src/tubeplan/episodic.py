"""Episode loop: deploy, recalibrate, transfer the radius, re-plan.

Each episode j deploys the current policy on n_j independently seeded
rollouts, recalibrates the tube quantile q_j at the inflated level, forms
the gain kappa_j (estimated by finite differences or fixed), computes the
next radius with the explicit rule or the bisection solver, and re-plans
warm started from the current policy. The loop stops when both the radius
change and the policy change stay below their thresholds for two
consecutive episodes, or at max_episodes.

Calibration and evaluation rollouts draw from disjoint seed streams so
coverage estimates are out of sample. Aggregation is order insensitive
(scores are sorted by the quantile; coverages are means), so rollouts may
be generated in any order or in parallel. TUBEPLAN_THREADS caps the worker
threads used for batch noise generation.
"""

from __future__ import annotations

import itertools
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import conformal
from .conformal import CalibrationResult, ScoreSet
from .dynamics import (
    PedestrianModel,
    Policy,
    Trajectory,
    draw_noise,
    policy_distance,
    predict_nominal,
    rollout_batch,
)
from .errors import ConfigurationError, InitializationError, NoSafeRadiusError
from .planner import PlannerConfig, PlanResult, safety_eval_batch, solve
from .radius_update import RadiusInterval, explicit_update, implicit_update, project
from .sensitivity import (
    SensitivityConfig,
    beta_T_analytic,
    beta_T_empirical,
    pedestrian_context,
    L_U_empirical,
)
from .seeding import (
    STREAM_CALIBRATION,
    STREAM_EVALUATION,
    STREAM_PRESEED,
)


def _thread_cap() -> int:
    raw = os.environ.get("TUBEPLAN_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigurationError(f"TUBEPLAN_THREADS must be an integer, got {raw!r}")


@dataclass
class RunConfig:
    """Full configuration of one episodic experiment."""

    alpha: float = 0.1
    delta: float = 0.05
    n_calibration: int = 1000
    n_eval: int = 1000
    r0: float | None = 2.0
    interval: RadiusInterval = field(default_factory=lambda: RadiusInterval(0.0, 3.0))
    max_episodes: int = 30
    min_episodes: int = 0
    stop_dr: float = 1e-3
    stop_dpi: float = 1e-3
    solver: str = "explicit"  # explicit | implicit
    kappa_mode: str = "estimated"  # estimated | fixed
    kappa_fixed: float = 0.0
    kappa_cap: float = 0.9
    bisect_tol: float = 1e-4
    seed: int = 0
    eval_seed: int | None = None  # defaults to seed; vary to probe seed isolation
    best_effort: bool = False
    x0: tuple[float, ...] = (0.0, 0.5)
    y0: tuple[float, ...] = (3.0, 1.5)
    model: PedestrianModel = field(default_factory=PedestrianModel)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    sensitivity: SensitivityConfig = field(default_factory=SensitivityConfig)

    def __post_init__(self):
        self.x0 = tuple(float(v) for v in self.x0)
        self.y0 = tuple(float(v) for v in self.y0)
        if not 0 < self.alpha < 1 or not 0 < self.delta < 1:
            raise ConfigurationError("alpha and delta must be in (0, 1)")
        if self.n_calibration < 1 or self.n_eval < 1:
            raise ConfigurationError("rollout counts must be >= 1")
        if self.max_episodes < 1:
            raise ConfigurationError("max_episodes must be >= 1")
        if self.stop_dr <= 0 or self.stop_dpi <= 0:
            raise ConfigurationError("stop thresholds must be > 0")
        if self.solver not in ("explicit", "implicit"):
            raise ConfigurationError(f"unknown solver {self.solver!r}")
        if self.kappa_mode not in ("estimated", "fixed"):
            raise ConfigurationError(f"unknown kappa_mode {self.kappa_mode!r}")
        if not 0 <= self.kappa_cap < 1:
            raise ConfigurationError("kappa_cap must be in [0, 1)")
        if self.kappa_mode == "fixed" and not 0 <= self.kappa_fixed < 1:
            raise ConfigurationError("kappa_fixed must be in [0, 1)")
        if self.r0 is not None and not self.interval.contains(self.r0):
            raise ConfigurationError(
                f"r0={self.r0} outside interval [{self.interval.r_min}, {self.interval.r_max}]"
            )
        if self.model.dt != self.planner.dt:
            raise ConfigurationError("model.dt and planner.dt must match")


@dataclass
class EpisodeRecord:
    """Per-episode metrics mirrored into episodes.csv."""

    j: int
    r: float
    q: float
    alpha_bar: float
    kappa_raw: float
    kappa_used: float
    policy: Policy
    cost: float
    tube_coverage: float
    safety_coverage: float
    dr: float
    dpi: float
    feasible: bool
    scores: ScoreSet | None = None
    beta_t: float = 0.0
    update_branch: str = ""
    projected: bool = False


@dataclass
class RunResult:
    """Episode records plus how the loop ended."""

    records: list[EpisodeRecord]
    stop_reason: str  # converged | max_episodes | infeasible | no-safe-radius

    @property
    def aborted(self) -> bool:
        return self.stop_reason in ("infeasible", "no-safe-radius")


def noise_batch(
    model: PedestrianModel, horizon: int, n: int, root: int, stream: int, episode: int
) -> np.ndarray:
    """(n, T, d) noise array; rollout i uses the stream keyed by its index."""

    def fill(lo: int, hi: int) -> np.ndarray:
        out = np.empty((hi - lo, horizon, model.dim))
        for i in range(lo, hi):
            out[i - lo] = draw_noise(model, horizon, root, stream, episode, i).draws
        return out

    workers = _thread_cap()
    if workers <= 1 or n < 2 * workers:
        return fill(0, n)
    edges = np.linspace(0, n, workers + 1, dtype=int)
    spans = [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda s: fill(*s), spans))
    return np.concatenate(parts, axis=0)


def calibration_scores(
    cfg: RunConfig, pi: Policy, episode: int, y_hat: Trajectory
) -> ScoreSet:
    """Scores of n_calibration fresh rollouts under pi against the prediction."""
    noise = noise_batch(
        cfg.model, pi.horizon, cfg.n_calibration, cfg.seed, STREAM_CALIBRATION, episode
    )
    _, ys = rollout_batch(pi, cfg.x0, cfg.y0, noise, cfg.model)
    return ScoreSet(conformal.score_batch(y_hat, ys), episode=episode)


def evaluate_coverage(
    pi: Policy,
    r: float,
    n_eval: int,
    root: int,
    episode: int,
    model: PedestrianModel,
    x0,
    y0,
    y_hat: Trajectory,
    d_min: float,
) -> tuple[float, float]:
    """Tube and safety coverage on fresh rollouts (seed stream disjoint
    from calibration)."""
    noise = noise_batch(model, pi.horizon, n_eval, root, STREAM_EVALUATION, episode)
    ego, ys = rollout_batch(pi, x0, y0, noise, model)
    scores = conformal.score_batch(y_hat, ys)
    tube_cov = float(np.mean(scores <= r))
    safety_cov = float(np.mean(safety_eval_batch(ego, ys, d_min) <= 0.0))
    return tube_cov, safety_cov


def suggest_initial_radius(
    cfg: RunConfig, n_rollouts: int = 10_000, factor: float = 1.5
) -> float:
    """Conservative r0: max score over extreme constant policies, inflated.

    Probes every constant policy with components in {-u_max, 0, u_max} and
    takes the worst observed score times a safety factor, so the initial
    tube is valid for any permissible policy with margin.
    """
    model = cfg.model
    horizon = cfg.planner.horizon
    y_hat = predict_nominal(cfg.y0, model, horizon)
    u = cfg.planner.u_max
    corners = list(itertools.product((-u, 0.0, u), repeat=model.dim))
    per_policy = max(1, -(-n_rollouts // len(corners)))
    worst = 0.0
    for idx, corner in enumerate(corners):
        pi = Policy(np.tile(corner, (horizon, 1)), u_max=u)
        noise = noise_batch(model, horizon, per_policy, cfg.seed, STREAM_PRESEED, idx)
        _, ys = rollout_batch(pi, cfg.x0, cfg.y0, noise, model)
        worst = max(worst, float(np.max(conformal.score_batch(y_hat, ys))))
    return factor * worst


def _episode_kappa(
    cfg: RunConfig, pi: Policy, r: float, episode: int, solve_at
) -> tuple[float, float, float]:
    """(kappa_raw, kappa_used, beta_t) for this episode."""
    sens = cfg.sensitivity
    if sens.beta_mode == "analytic":
        _, beta = beta_T_analytic(sens.constants, pi.horizon)
    else:
        ctx = pedestrian_context(cfg.model, cfg.x0, cfg.y0, pi.horizon)
        beta = beta_T_empirical(
            pi, ctx, sens.beta_probes, sens.beta_step, cfg.seed, episode=episode
        )
    if cfg.kappa_mode == "fixed":
        raw = cfg.kappa_fixed
    else:
        h = min(sens.lu_step, r)
        if h <= 0.0:
            lu = 0.0
        else:
            lu = L_U_empirical(r, h, solve_at, warm_start=pi)
        raw = beta * lu
    used = min(raw, cfg.kappa_cap)
    return raw, used, beta


def run(cfg: RunConfig) -> RunResult:
    """Run the iterative safe-planning loop; see the module docstring."""
    model = cfg.model
    pcfg = cfg.planner
    y_hat = predict_nominal(cfg.y0, model, pcfg.horizon)
    x0 = np.asarray(cfg.x0, dtype=float)

    def solve_at(radius: float, warm: Policy | None) -> PlanResult:
        return solve(radius, y_hat, x0, pcfg, model, warm_start=warm)

    r = cfg.r0 if cfg.r0 is not None else suggest_initial_radius(cfg)
    if not cfg.interval.contains(r):
        raise ConfigurationError(f"initial radius {r} outside the admissible interval")

    plan = solve_at(r, None)
    if not plan.feasible:
        raise InitializationError(
            f"planner infeasible at r0={r} (slack {plan.constraint_slack:.4g}); "
            "no valid initial policy"
        )
    pi, cost = plan.policy, plan.cost

    records: list[EpisodeRecord] = []
    quiet = 0
    reason = "max_episodes"
    for j in range(cfg.max_episodes):
        scores = calibration_scores(cfg, pi, j, y_hat)
        cal: CalibrationResult = conformal.calibrate(scores, cfg.alpha, cfg.delta)
        eval_root = cfg.seed if cfg.eval_seed is None else cfg.eval_seed
        tube_cov, safety_cov = evaluate_coverage(
            pi, r, cfg.n_eval, eval_root, j, model, cfg.x0, cfg.y0, y_hat, pcfg.d_min
        )
        kappa_raw, kappa_used, beta = _episode_kappa(cfg, pi, r, j, solve_at)

        if cfg.solver == "explicit":
            outcome = explicit_update(cal.q, r, kappa_used)
        else:
            outcome = implicit_update(
                cal.q, r, pi, beta, cfg.interval, cfg.bisect_tol, solve_at
            )
        r_next = project(outcome.r_next, cfg.interval)
        projected = r_next != outcome.r_next
        certified = True
        if projected and r_next < outcome.r_next:
            # clipped down to r_max: the safety inequality must be re-checked
            certified = r_next >= cal.q + kappa_used * abs(r_next - r) - 1e-9

        next_plan = solve_at(r_next, pi)
        dr = abs(r_next - r)
        dpi = policy_distance(next_plan.policy, pi)
        feasible = next_plan.feasible and certified
        records.append(
            EpisodeRecord(
                j=j,
                r=r,
                q=cal.q,
                alpha_bar=cal.alpha_bar,
                kappa_raw=kappa_raw,
                kappa_used=kappa_used,
                policy=pi,
                cost=cost,
                tube_coverage=tube_cov,
                safety_coverage=safety_cov,
                dr=dr,
                dpi=dpi,
                feasible=feasible,
                scores=scores,
                beta_t=beta,
                update_branch=outcome.branch,
                projected=projected,
            )
        )
        if not feasible and not cfg.best_effort:
            reason = "infeasible" if not next_plan.feasible else "no-safe-radius"
            break
        pi, cost, r = next_plan.policy, next_plan.cost, r_next
        if dr < cfg.stop_dr and dpi < cfg.stop_dpi:
            quiet += 1
        else:
            quiet = 0
        if quiet >= 2 and (j + 1) >= cfg.min_episodes:
            reason = "converged"
            break
    return RunResult(records=records, stop_reason=reason)
