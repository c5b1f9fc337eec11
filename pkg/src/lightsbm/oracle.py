"""Ground truth for Gaussian marginals and a discrete Sinkhorn solver to validate it.

Convention throughout: cost ``|x0 - x1|^2 / 2`` and entropy weight ``eps``.
For Gaussians N(m0, C0), N(m1, C1) the optimal plan is jointly Gaussian with
cross-covariance

    C01 = 1/2 C0^{1/2} (4 C0^{1/2} C1 C0^{1/2} + eps^2 I)^{1/2} C0^{-1/2} - eps/2 I

(in 1-D this is the positive root of c^2 + eps c - a b = 0).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import logsumexp


def _sym_sqrt(m):
    w, q = np.linalg.eigh(0.5 * (m + m.T))
    return (q * np.sqrt(np.clip(w, 0.0, None))) @ q.T


def _check_spd(c, name):
    c = np.atleast_2d(np.asarray(c, dtype=np.float64))
    if c.shape[0] != c.shape[1] or not np.allclose(c, c.T, atol=1e-12, rtol=1e-10):
        raise ValueError(f"{name} must be a symmetric square matrix")
    if np.linalg.eigvalsh(c).min() <= 0:
        raise ValueError(f"{name} is not positive definite")
    return 0.5 * (c + c.T)


@dataclass
class GaussianEotOracle:
    m0: np.ndarray
    C0: np.ndarray
    m1: np.ndarray
    C1: np.ndarray
    eps: float
    cross_cov: np.ndarray  # Cov(x0, x1)

    @property
    def dim(self) -> int:
        return self.m0.size

    @property
    def joint_cov(self) -> np.ndarray:
        return np.block([[self.C0, self.cross_cov], [self.cross_cov.T, self.C1]])

    def conditional_moments(self, x0):
        """Mean (N, D) and shared covariance (D, D) of pi*(x1 | x0)."""
        x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
        coef = np.linalg.solve(self.C0, self.cross_cov).T  # C10 C0^-1
        mean = self.m1 + (x0 - self.m0) @ coef.T
        cov = self.C1 - coef @ self.cross_cov
        return mean, 0.5 * (cov + cov.T)

    def sample_source(self, n, rng):
        return rng.multivariate_normal(self.m0, self.C0, size=n)

    def sample_target(self, n, rng):
        return rng.multivariate_normal(self.m1, self.C1, size=n)

    def sample_plan(self, n, rng):
        """Joint draws (x0, x1) from pi*."""
        z = rng.multivariate_normal(np.concatenate([self.m0, self.m1]), self.joint_cov, size=n)
        return z[:, : self.dim], z[:, self.dim :]

    def sample_conditional(self, x0, n, rng):
        mean, cov = self.conditional_moments(x0)
        return rng.multivariate_normal(mean[0], cov, size=n)


def gaussian_eot_plan(m0, C0, m1, C1, eps) -> GaussianEotOracle:
    m0 = np.atleast_1d(np.asarray(m0, dtype=np.float64))
    m1 = np.atleast_1d(np.asarray(m1, dtype=np.float64))
    C0 = _check_spd(C0, "C0")
    C1 = _check_spd(C1, "C1")
    d = m0.size
    if m1.size != d or C0.shape != (d, d) or C1.shape != (d, d):
        raise ValueError("inconsistent oracle dimensions")
    if not eps > 0:
        raise ValueError("eps must be positive")
    s0 = _sym_sqrt(C0)
    s0_inv = np.linalg.inv(s0)
    inner = _sym_sqrt(4.0 * s0 @ C1 @ s0 + eps**2 * np.eye(d))
    cross = 0.5 * s0 @ inner @ s0_inv - 0.5 * eps * np.eye(d)
    return GaussianEotOracle(m0, C0, m1, C1, float(eps), cross)


def _bridge_stats(oracle, t):
    """Mean/cov of x_t and Cov(x1, x_t) under the oracle's bridge mixture."""
    c01 = oracle.cross_cov
    d = oracle.dim
    mu_t = t * oracle.m1 + (1 - t) * oracle.m0
    var_t = (
        t**2 * oracle.C1
        + (1 - t) ** 2 * oracle.C0
        + t * (1 - t) * (c01 + c01.T)
        + oracle.eps * t * (1 - t) * np.eye(d)
    )
    cov_1t = t * oracle.C1 + (1 - t) * c01.T
    return mu_t, var_t, cov_1t


def gaussian_sb_drift(oracle: GaussianEotOracle, x, t):
    """g*(x, t) = (E[x1 | x_t = x] - x) / (1 - t); accepts x (D,) or (N, D)."""
    if not t < 1:
        raise ValueError("t must be < 1")
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = np.atleast_2d(x)
    mu_t, var_t, cov_1t = _bridge_stats(oracle, t)
    gain = np.linalg.solve(var_t, cov_1t.T).T
    e1 = oracle.m1 + (xb - mu_t) @ gain.T
    g = (e1 - xb) / (1.0 - t)
    return g[0] if single else g


def sample_bridge_marginal(oracle: GaussianEotOracle, t, n, rng):
    """x_t ~ T* at time t (Gaussian)."""
    mu_t, var_t, _ = _bridge_stats(oracle, t)
    return rng.multivariate_normal(mu_t, var_t, size=n)


@dataclass
class GridPlan:
    support0: np.ndarray
    support1: np.ndarray
    plan: np.ndarray
    violation: float
    n_iter: int

    def cross_covariance(self) -> float:
        """Cov(x0, x1) for 1-D supports."""
        s0 = np.ravel(self.support0)
        s1 = np.ravel(self.support1)
        p = self.plan
        m0 = p.sum(axis=1) @ s0
        m1 = p.sum(axis=0) @ s1
        return float((s0 - m0) @ p @ (s1 - m1))


class SinkhornNotConverged(RuntimeError):
    pass


def grid_sinkhorn(weights0, points0, weights1, points1, eps, tol=1e-10, max_iter=100_000) -> GridPlan:
    """Log-domain Sinkhorn for cost |x - y|^2 / 2 with entropic weight eps."""
    a = np.asarray(weights0, dtype=np.float64)
    b = np.asarray(weights1, dtype=np.float64)
    if np.any(a <= 0) or np.any(b <= 0):
        raise ValueError("weights must be positive")
    if abs(a.sum() - 1) > 1e-9 or abs(b.sum() - 1) > 1e-9:
        raise ValueError("weights must sum to 1")
    p0 = np.asarray(points0, dtype=np.float64).reshape(a.size, -1)
    p1 = np.asarray(points1, dtype=np.float64).reshape(b.size, -1)
    cost = 0.5 * np.sum((p0[:, None, :] - p1[None, :, :]) ** 2, axis=-1)
    log_k = -cost / eps
    log_a, log_b = np.log(a), np.log(b)
    f = np.zeros(a.size)
    g = np.zeros(b.size)
    violation = np.inf
    for it in range(1, max_iter + 1):
        f = log_a - logsumexp(log_k + g[None, :], axis=1)
        g = log_b - logsumexp(log_k + f[:, None], axis=0)
        if it % 10 == 0 or it == max_iter:
            # columns are exact after the g-update; check rows
            log_rows = f + logsumexp(log_k + g[None, :], axis=1)
            violation = float(np.abs(np.exp(log_rows) - a).sum())
            if violation < tol:
                plan = np.exp(log_k + f[:, None] + g[None, :])
                return GridPlan(p0, p1, plan, violation, it)
    raise SinkhornNotConverged(f"Sinkhorn did not converge in {max_iter} iterations (violation {violation:.3e})")


def gaussian_grid(mean, var, n=400, width=6.0):
    """Grid on [mean - width*sd, mean + width*sd] with normalized Gaussian weights."""
    sd = np.sqrt(var)
    pts = np.linspace(mean - width * sd, mean + width * sd, n)
    logw = -0.5 * (pts - mean) ** 2 / var
    w = np.exp(logw - logsumexp(logw))
    return pts, w


def sinkhorn_cross_cov_1d(m0, var0, m1, var1, eps, n=400, tol=1e-12):
    """Cross-covariance of the discretized 1-D Gaussian EOT problem."""
    x, a = gaussian_grid(m0, var0, n)
    y, b = gaussian_grid(m1, var1, n)
    return grid_sinkhorn(a, x, b, y, eps, tol=tol).cross_covariance()


VALIDATION_EPS = (0.1, 1.0, 10.0)
VALIDATION_VARS = (0.5, 1.0, 2.0)


@lru_cache(maxsize=None)
def validate_closed_form(rtol=1e-3):
    """D=1 grid-Sinkhorn check of the closed-form cross-covariance.

    Returns the worst relative error; raises if it exceeds ``rtol``. Cached so
    the gate runs once per process.
    """
    worst = 0.0
    for eps in VALIDATION_EPS:
        for var in VALIDATION_VARS:
            # asymmetric pair: source variance var, target variance 1, shifted mean
            closed = gaussian_eot_plan([0.0], [[var]], [0.5], [[1.0]], eps).cross_cov[0, 0]
            grid = sinkhorn_cross_cov_1d(0.0, var, 0.5, 1.0, eps)
            worst = max(worst, abs(closed - grid) / abs(grid))
    if worst >= rtol:
        raise RuntimeError(f"Gaussian EOT closed form failed Sinkhorn validation (rel err {worst:.2e})")
    return worst
