"""Brownian-bridge sampling and Euler-Maruyama simulation for the Wiener prior W^eps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class PairBatch:
    x0: np.ndarray  # (N, D)
    x1: np.ndarray  # (N, D)

    def __post_init__(self):
        self.x0 = np.atleast_2d(np.asarray(self.x0, dtype=np.float64))
        self.x1 = np.atleast_2d(np.asarray(self.x1, dtype=np.float64))
        if self.x0.shape != self.x1.shape:
            raise ValueError(f"pair shapes differ: {self.x0.shape} vs {self.x1.shape}")

    def __len__(self):
        return self.x0.shape[0]


@dataclass
class TrajectoryBatch:
    times: np.ndarray  # (L,)
    points: np.ndarray  # (N, L, D)
    eps: float

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.points = np.asarray(self.points, dtype=np.float64)
        _check_times(self.times)
        if self.points.ndim != 3 or self.points.shape[1] != self.times.size:
            raise ValueError(
                f"points shape {self.points.shape} inconsistent with {self.times.size} times"
            )

    @property
    def endpoints(self) -> np.ndarray:
        return self.points[:, -1, :]


def _check_times(times):
    if times.ndim != 1 or times.size < 2:
        raise ValueError("times must be a 1-D grid with at least two entries")
    if times[0] != 0.0 or times[-1] != 1.0:
        raise ValueError("times must start at 0 and end at 1")
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")


def sample_bridge_point(x0, x1, t, eps, rng):
    """x_t ~ N(t x1 + (1-t) x0, eps t (1-t) I); broadcasts over rows and per-row t."""
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0) or np.any(t > 1):
        raise ValueError("t must lie in [0, 1]")
    if x0.ndim == 2 and t.ndim == 1:
        t = t[:, None]
    mean = t * x1 + (1.0 - t) * x0
    std = np.sqrt(eps * t * (1.0 - t))
    noise = rng.standard_normal(np.broadcast_shapes(mean.shape, np.shape(std)))
    # endpoints must come back bit-exact
    return np.where(std == 0.0, mean, mean + std * noise)


def refine_trajectory(x_at_tl, x_at_tr, tl, tr, t_new, eps, rng):
    """Sample x at ``t_new`` given the bridge values at ``tl < t_new < tr``."""
    if not tl < t_new < tr:
        raise ValueError(f"t_new={t_new} must lie strictly inside ({tl}, {tr})")
    x_l = np.asarray(x_at_tl, dtype=np.float64)
    x_r = np.asarray(x_at_tr, dtype=np.float64)
    frac = (t_new - tl) / (tr - tl)
    var = eps * (t_new - tl) * (tr - t_new) / (tr - tl)
    return x_l + frac * (x_r - x_l) + np.sqrt(var) * rng.standard_normal(x_l.shape)


def sample_reciprocal(pairs: PairBatch, times, eps, rng) -> TrajectoryBatch:
    """Brownian bridges between each pair evaluated on ``times``.

    Interior points are filled left to right, each conditioned on the previous
    point and the fixed endpoint x1.
    """
    times = np.asarray(times, dtype=np.float64)
    _check_times(times)
    n, d = pairs.x0.shape
    pts = np.empty((n, times.size, d))
    pts[:, 0] = pairs.x0
    pts[:, -1] = pairs.x1
    for i in range(1, times.size - 1):
        pts[:, i] = refine_trajectory(pts[:, i - 1], pairs.x1, times[i - 1], 1.0, times[i], eps, rng)
    return TrajectoryBatch(times, pts, eps)


def euler_maruyama(drift_fn, x0_batch, eps, n_steps, rng) -> TrajectoryBatch:
    """Simulate dx = g(x, t) dt + sqrt(eps) dW on the uniform grid i / n_steps.

    ``drift_fn(x, t)`` receives the (N, D) state and a scalar time < 1.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if not eps > 0:
        raise ValueError("eps must be positive")
    x = np.atleast_2d(np.asarray(x0_batch, dtype=np.float64))
    n, d = x.shape
    dt = 1.0 / n_steps
    times = np.arange(n_steps + 1) / n_steps
    pts = np.empty((n, n_steps + 1, d))
    pts[:, 0] = x
    noise_scale = np.sqrt(eps * dt)
    for i in range(n_steps):
        g = np.asarray(drift_fn(x, times[i]), dtype=np.float64)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite drift at step {i} (t={times[i]:.6g})")
        x = x + g * dt + noise_scale * rng.standard_normal((n, d))
        pts[:, i + 1] = x
    return TrajectoryBatch(times, pts, eps)
