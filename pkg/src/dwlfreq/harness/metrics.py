"""Steady-state bias and variance of frequency trajectories.

Trajectories are arrays shaped ``(steps, nodes, trials)``. All aggregates
use only the samples inside a half-open window ``[start, stop)`` of step
indices.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from ..powergrid import GridScenario

Z95 = 1.6448536269514722  # one-sided 95% normal quantile
STEADY_FRACTION = 0.2


class Metrics(NamedTuple):
    bias: np.ndarray  # (nodes,)
    variance: np.ndarray  # (nodes,)


class VarianceComparison(NamedTuple):
    """Paired comparison of two pooled variances over the same trials."""

    var_a: float
    var_b: float
    difference: float
    upper95: float

    @property
    def a_not_larger(self) -> bool:
        """True when ``var_a <= var_b`` holds with 95% one-sided confidence."""
        return self.upper95 <= 0.0


def _window(traj: np.ndarray, f_true: np.ndarray, window: tuple[int, int]):
    traj = np.asarray(traj, dtype=float)
    if traj.ndim == 2:
        traj = traj[..., None]
    f_true = np.broadcast_to(np.asarray(f_true, dtype=float), traj.shape[:1])
    start, stop = window
    if not 0 <= start < stop <= traj.shape[0]:
        raise ValueError(f"window {window} is empty or outside the {traj.shape[0]}-step trajectory")
    return traj[start:stop], f_true[start:stop, None, None]


def compute_metrics(traj: np.ndarray, f_true: np.ndarray, window: tuple[int, int]) -> Metrics:
    """Per-node bias and variance pooled over the window and all trials.

    ``bias = mean(f_hat - f_true)`` and ``variance = var(f_hat)``, both
    taken over every (step, trial) sample in the window.
    """
    w, f = _window(traj, f_true, window)
    nodes = w.shape[1]
    err = np.moveaxis(w - f, 1, 0).reshape(nodes, -1)
    est = np.moveaxis(w, 1, 0).reshape(nodes, -1)
    ddof = 1 if est.shape[1] > 1 else 0
    return Metrics(err.mean(axis=1), est.var(axis=1, ddof=ddof))


def trial_bias(traj: np.ndarray, f_true: np.ndarray, window: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """Per-node Monte Carlo bias and its standard error.

    Each trial contributes its window-averaged error; the standard error is
    the spread of those averages over ``sqrt(trials)``.
    """
    w, f = _window(traj, f_true, window)
    per_trial = (w - f).mean(axis=0)  # (nodes, trials)
    n = per_trial.shape[1]
    se = per_trial.std(axis=1, ddof=1) / np.sqrt(n) if n > 1 else np.full(per_trial.shape[0], np.nan)
    return per_trial.mean(axis=1), se


def ensemble_variance(traj: np.ndarray, window: tuple[int, int]) -> np.ndarray:
    """Per-node variance across trials at each step, averaged over the window.

    Unlike the pooled variance this excludes any deterministic oscillation
    shared by all trials.
    """
    w, _ = _window(traj, 0.0, window)
    if w.shape[2] < 2:
        raise ValueError("ensemble variance needs at least two trials")
    return w.var(axis=2, ddof=1).mean(axis=0)


def _contributions(traj: np.ndarray, node: int, window: tuple[int, int]) -> np.ndarray:
    w, _ = _window(traj, 0.0, window)
    x = w[:, node, :]
    n = x.size
    # per-trial share of the pooled sum of squares, scaled so the mean equals the variance
    return ((x - x.mean()) ** 2).mean(axis=0) * n / (n - 1)


def compare_variances(a: np.ndarray, b: np.ndarray, node: int, window: tuple[int, int]) -> VarianceComparison:
    """Paired test of ``var(a) <= var(b)`` at one node.

    ``a`` and ``b`` must come from the same noise realisations so each trial
    gives one paired difference of its pooled-variance contributions.
    """
    ca, cb = _contributions(a, node, window), _contributions(b, node, window)
    if ca.shape != cb.shape or ca.size < 2:
        raise ValueError("need the same trials, at least two, for both trajectories")
    d = ca - cb
    upper = d.mean() + Z95 * d.std(ddof=1) / np.sqrt(d.size)
    return VarianceComparison(float(ca.mean()), float(cb.mean()), float(d.mean()), float(upper))


def window_indices(s: GridScenario, window_s: tuple[float, float] | None = None) -> tuple[int, int]:
    """Step range of a window in seconds, or the default steady-state window.

    The default covers the last 20% of the final constant-condition segment.
    """
    if window_s is None:
        return segment_windows(s)[-1]
    start = int(round(window_s[0] / s.T))
    stop = min(int(round(window_s[1] / s.T)), s.duration)
    if not 0 <= start < stop:
        raise ValueError(f"window {window_s} s holds no samples")
    return start, stop


def segment_windows(s: GridScenario) -> list[tuple[int, int]]:
    """Last 20% of every constant-condition segment."""
    out = []
    for a, b in s.segments():
        length = max(1, int(round(STEADY_FRACTION * (b - a))))
        out.append((b - length, b))
    return out
