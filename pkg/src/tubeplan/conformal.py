"""Nonconformity score, trajectory tube, and finite-sample calibration.

The score of an observed trajectory against the nominal prediction is the
max-over-time Euclidean deviation; the induced tube of radius r is the set
of trajectories with score <= r. Calibration computes the k-th order
statistic of held-out scores with k = ceil((n+1) * level), at the inflated
level 1 - alpha_bar where alpha_bar = alpha - sqrt(ln(1/delta) / (2n)).
The inflation buys a calibration-conditional guarantee: with probability at
least 1 - delta over the calibration draw, a fresh score falls inside the
tube with probability at least 1 - alpha.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dynamics import Trajectory, _norms
from .errors import ConfigurationError, InsufficientSamplesError


@dataclass(frozen=True)
class ScoreSet:
    """Multiset of nonconformity scores collected in one episode."""

    scores: np.ndarray
    episode: int = 0

    def __post_init__(self):
        arr = np.asarray(self.scores, dtype=float).ravel()
        if arr.size < 1:
            raise ConfigurationError("score set must be nonempty")
        if not np.all(np.isfinite(arr)):
            raise ConfigurationError("scores contain NaN or Inf")
        if np.any(arr < 0):
            raise ConfigurationError("scores must be nonnegative")
        object.__setattr__(self, "scores", arr)

    @property
    def n(self) -> int:
        return self.scores.size


@dataclass(frozen=True)
class CalibrationResult:
    """Empirical quantile q with the level bookkeeping that produced it."""

    q: float
    alpha_bar: float
    n: int
    k_index: int


@dataclass(frozen=True)
class TubeSpec:
    """Tube of radius r around a predicted center trajectory."""

    center: Trajectory
    radius: float

    def __post_init__(self):
        if self.radius < 0:
            raise ConfigurationError("tube radius must be >= 0")


def _states(traj) -> np.ndarray:
    return traj.states if isinstance(traj, Trajectory) else np.asarray(traj, dtype=float)


def score(y_hat, y) -> float:
    """Max over t of ||yhat_t - y_t||_2. Symmetric and 1-Lipschitz in each arg."""
    a = _states(y_hat)
    b = _states(y)
    if a.shape != b.shape:
        raise ConfigurationError(f"trajectory length mismatch: {a.shape} vs {b.shape}")
    return float(np.max(_norms(a - b)))


def score_batch(y_hat, trajectories: np.ndarray) -> np.ndarray:
    """Scores of an (n, T+1, d) stack against one prediction."""
    a = _states(y_hat)
    trajectories = np.asarray(trajectories, dtype=float)
    if trajectories.shape[1:] != a.shape:
        raise ConfigurationError("trajectory stack shape mismatch")
    return np.max(_norms(trajectories - a[None, :, :]), axis=1)


def inflated_level(alpha: float, delta: float, n: int) -> float:
    """alpha_bar = alpha - sqrt(ln(1/delta) / (2n)); must come out positive."""
    if not 0 < alpha < 1:
        raise ConfigurationError(f"alpha must be in (0,1), got {alpha}")
    if not 0 < delta < 1:
        raise ConfigurationError(f"delta must be in (0,1), got {delta}")
    if n < 1:
        raise ConfigurationError(f"n must be >= 1, got {n}")
    alpha_bar = alpha - math.sqrt(math.log(1.0 / delta) / (2.0 * n))
    if alpha_bar <= 0:
        raise InsufficientSamplesError(
            f"n={n} is too small for (alpha={alpha}, delta={delta}): "
            f"inflated level {alpha_bar:.6g} <= 0"
        )
    return alpha_bar


def quantile_index(n: int, level: float) -> int:
    """Order-statistic index k = ceil((n+1) * level); requires k <= n."""
    if not 0 < level < 1:
        raise ConfigurationError(f"quantile level must be in (0,1), got {level}")
    # tiny guard against float roundoff at exact-integer boundaries
    k = math.ceil((n + 1) * level - 1e-9)
    k = max(k, 1)
    if k > n:
        raise InsufficientSamplesError(
            f"quantile index k={k} exceeds sample count n={n} at level {level}"
        )
    return k


def empirical_quantile(scores, level: float) -> CalibrationResult:
    """k-th smallest score with k = ceil((n+1) * level); ties kept as multiset."""
    if not isinstance(scores, ScoreSet):
        scores = ScoreSet(scores)
    n = scores.n
    k = quantile_index(n, level)
    q = float(np.partition(scores.scores, k - 1)[k - 1])
    return CalibrationResult(q=q, alpha_bar=1.0 - level, n=n, k_index=k)


def calibrate(scores, alpha: float, delta: float) -> CalibrationResult:
    """One recalibration step: inflate the level, then take the quantile."""
    if not isinstance(scores, ScoreSet):
        scores = ScoreSet(scores)
    alpha_bar = inflated_level(alpha, delta, scores.n)
    result = empirical_quantile(scores, 1.0 - alpha_bar)
    return CalibrationResult(q=result.q, alpha_bar=alpha_bar, n=result.n, k_index=result.k_index)


def tube_contains(tube: TubeSpec, y) -> bool:
    """Closed tube membership: score(center, y) <= radius."""
    return score(tube.center, y) <= tube.radius


def coverage_estimate(tube: TubeSpec, rollouts) -> float:
    """Fraction of trajectories inside the tube."""
    if isinstance(rollouts, np.ndarray) and rollouts.ndim == 3:
        scores = score_batch(tube.center, rollouts)
        return float(np.mean(scores <= tube.radius))
    rollouts = list(rollouts)
    if not rollouts:
        raise ConfigurationError("coverage requires at least one rollout")
    hits = sum(1 for y in rollouts if tube_contains(tube, y))
    return hits / len(rollouts)


def save_scores_csv(scores, path) -> None:
    """One score per line, full double precision, header `score`."""
    if not isinstance(scores, ScoreSet):
        scores = ScoreSet(scores)
    lines = ["score"] + [repr(float(s)) for s in scores.scores]
    Path(path).write_text("\n".join(lines) + "\n")


def load_scores_csv(path, episode: int = 0) -> ScoreSet:
    lines = Path(path).read_text().strip().splitlines()
    if not lines or lines[0].strip() != "score":
        raise ConfigurationError(f"{path}: expected header 'score'")
    try:
        values = [float(s) for s in lines[1:] if s.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"{path}: malformed score line ({exc})") from exc
    return ScoreSet(np.asarray(values), episode=episode)
