"""Radius transfer across policy updates.

The next radius must cover the freshly calibrated quantile q plus the
policy-induced distribution shift. Two solvers:

* explicit_update: minimal solution of the scalar inequality
  r+ >= q + kappa * |r+ - r|, valid for kappa < 1:

      r+ = (q + kappa * r) / (1 + kappa)   if q <= r   (shrinkage)
      r+ = (q - kappa * r) / (1 - kappa)   if q >  r   (expansion)

* implicit_update: bisection on the exact requirement
  r+ >= q + beta_T * ||pi*(r+) - pi_prev||_inf, treating the planner as a
  black box. Less conservative, one planner solve per probe.

project clamps onto the admissible interval [r_min, r_max]. Because the
left-hand side of the inequality grows strictly faster than the right
(slope 1 vs at most kappa < 1), projecting up preserves safety; projecting
down onto r_max must be re-checked by the caller.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dynamics import Policy, policy_distance
from .errors import ConfigurationError, InvalidGainError, NoSafeRadiusError


@dataclass(frozen=True)
class RadiusInterval:
    """Admissible radius interval [r_min, r_max]."""

    r_min: float = 0.0
    r_max: float = np.inf

    def __post_init__(self):
        if not 0 <= self.r_min <= self.r_max:
            raise ConfigurationError(
                f"invalid interval [{self.r_min}, {self.r_max}]"
            )

    def contains(self, r: float) -> bool:
        return self.r_min <= r <= self.r_max


@dataclass(frozen=True)
class UpdateOutcome:
    r_next: float
    branch: str  # shrinkage | expansion | bisection
    projected: bool
    slack: float  # r_next - (q + shift term at r_next)
    probes: int = 0


def explicit_update(q: float, r: float, kappa: float) -> UpdateOutcome:
    """Minimal radius satisfying r+ >= q + kappa * |r+ - r|."""
    if not 0.0 <= kappa < 1.0:
        raise InvalidGainError(f"kappa must be in [0, 1), got {kappa}")
    if q < 0 or r < 0:
        raise ConfigurationError("q and r must be >= 0")
    if q <= r:
        r_next = (q + kappa * r) / (1.0 + kappa)
        branch = "shrinkage"
    else:
        r_next = (q - kappa * r) / (1.0 - kappa)
        branch = "expansion"
    slack = r_next - (q + kappa * abs(r_next - r))
    return UpdateOutcome(r_next=r_next, branch=branch, projected=False, slack=slack)


def project(r: float, interval: RadiusInterval) -> float:
    """Clamp onto [r_min, r_max]."""
    return min(interval.r_max, max(interval.r_min, r))


def implicit_update(
    q: float,
    r_prev: float,
    pi_prev: Policy,
    beta_t: float,
    interval: RadiusInterval,
    bisect_tol: float,
    solve_at: Callable[[float, Policy | None], "object"],
) -> UpdateOutcome:
    """Bisection for the smallest safe radius in [max(q, r_min), r_max].

    A candidate r is safe when the planner's policy at r satisfies
    r >= q + beta_T * ||pi*(r) - pi_prev||_inf. The search keeps the upper
    end safe at all times, halves the bracket until it is narrower than
    bisect_tol, and returns the safe upper end. Probe solves are warm
    started from the previous probe's policy to keep the realized solution
    map near-continuous.
    """
    if beta_t < 0:
        raise ConfigurationError("beta_T must be >= 0")
    if bisect_tol <= 0:
        raise ConfigurationError("bisect_tol must be > 0")
    if q < 0 or r_prev < 0:
        raise ConfigurationError("q and r_prev must be >= 0")
    if not np.isfinite(interval.r_max):
        raise ConfigurationError("implicit update needs a finite r_max")

    warm = pi_prev
    probes = 0

    def shift_slack(r_cand: float):
        """(slack, policy): slack >= 0 means r_cand is safe."""
        nonlocal warm, probes
        result = solve_at(r_cand, warm)
        probes += 1
        if not result.feasible:
            return -np.inf, None
        warm = result.policy
        shift = beta_t * policy_distance(result.policy, pi_prev)
        return r_cand - (q + shift), result.policy

    low = max(q, interval.r_min)
    if low > interval.r_max:
        raise NoSafeRadiusError(
            f"quantile q={q} exceeds r_max={interval.r_max}"
        )

    low_slack, _ = shift_slack(low)
    if low_slack >= 0:
        return UpdateOutcome(
            r_next=low, branch="bisection", projected=False, slack=low_slack, probes=probes
        )

    high = interval.r_max
    high_slack, _ = shift_slack(high)
    if high_slack < 0:
        detail = (
            "planner infeasible there"
            if high_slack == -np.inf
            else f"slack {high_slack:.3g}"
        )
        raise NoSafeRadiusError(
            f"r_max={interval.r_max} violates the safety inequality "
            f"({detail}); no safe radius in the interval"
        )

    while high - low > bisect_tol:
        mid = 0.5 * (low + high)
        mid_slack, _ = shift_slack(mid)
        if mid_slack >= 0:
            high, high_slack = mid, mid_slack
        else:
            low = mid
    return UpdateOutcome(
        r_next=high, branch="bisection", projected=False, slack=high_slack, probes=probes
    )
