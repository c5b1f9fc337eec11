"""Gaussian-mixture adjusted Schrödinger potential and its closed forms.

The potential is

    v(x1) = sum_k alpha_k N(x1 | r_k, eps * Sigma_k)

with diagonal ``Sigma_k``. Everything the solver needs (normalizer, conditional
plan, SB drift) is a Gaussian integral against this mixture and is evaluated
in log-space.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp, softmax

VAR_FLOOR = 1e-8
LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class GaussianMixturePotential:
    """Learnable potential: ``eps`` plus K diagonal Gaussian components.

    Parameters are stored unconstrained: ``raw_weights`` are logits and
    ``raw_log_vars`` are log-variances of ``Sigma_k`` (floored at 1e-8 on read).
    """

    eps: float
    raw_weights: np.ndarray  # (K,)
    means: np.ndarray  # (K, D)
    raw_log_vars: np.ndarray  # (K, D)

    def __post_init__(self):
        self.eps = float(self.eps)
        self.raw_weights = np.asarray(self.raw_weights, dtype=np.float64)
        self.means = np.asarray(self.means, dtype=np.float64)
        self.raw_log_vars = np.asarray(self.raw_log_vars, dtype=np.float64)
        if not self.eps > 0 or not np.isfinite(self.eps):
            raise ValueError(f"eps must be a positive finite number, got {self.eps}")
        if self.means.ndim != 2:
            raise ValueError("means must have shape (K, D)")
        k, d = self.means.shape
        if k < 1 or d < 1:
            raise ValueError("need at least one component and one dimension")
        if self.raw_weights.shape != (k,) or self.raw_log_vars.shape != (k, d):
            raise ValueError(
                f"inconsistent shapes: raw_weights {self.raw_weights.shape}, "
                f"means {self.means.shape}, raw_log_vars {self.raw_log_vars.shape}"
            )
        for name in ("raw_weights", "means", "raw_log_vars"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} contains non-finite values")

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def log_weights(self) -> np.ndarray:
        return self.raw_weights - logsumexp(self.raw_weights)

    @property
    def weights(self) -> np.ndarray:
        return softmax(self.raw_weights)

    @property
    def variances(self) -> np.ndarray:
        """Diagonals of ``Sigma_k`` (not multiplied by eps), shape (K, D)."""
        return np.maximum(np.exp(self.raw_log_vars), VAR_FLOOR)

    def copy(self) -> "GaussianMixturePotential":
        return GaussianMixturePotential(
            self.eps, self.raw_weights.copy(), self.means.copy(), self.raw_log_vars.copy()
        )


@dataclass
class ConditionalPlanMixture:
    """Mixture form of the conditional plan pi_v(x1 | x0)."""

    weights: np.ndarray  # (K,)
    means: np.ndarray  # (K, D)
    diag_covs: np.ndarray  # (K, D)

    def mean(self) -> np.ndarray:
        return self.weights @ self.means

    def covariance(self) -> np.ndarray:
        m = self.mean()
        second = np.einsum("k,kd,ke->de", self.weights, self.means, self.means)
        second += np.diag(self.weights @ self.diag_covs)
        return second - np.outer(m, m)


class DriftAux(NamedTuple):
    """Per-evaluation intermediates of the closed-form drift (batched)."""

    A_inv_diag: np.ndarray  # (N, K, D)
    h: np.ndarray  # (N, K, D)
    u: np.ndarray  # (N, K, D), A^-1 h
    log_terms: np.ndarray  # (N, K)
    resp: np.ndarray  # (N, K), softmax of log_terms


def init_potential(dim, n_components, eps, target_samples=None, init_scale=1.0, seed=0):
    """Uniform weights, ``Sigma_k = init_scale * I``, means from data or N(0, init_scale^2)."""
    if dim < 1 or n_components < 1:
        raise ValueError("dim and n_components must be >= 1")
    if not eps > 0:
        raise ValueError("eps must be positive")
    if not init_scale > 0:
        raise ValueError("init_scale must be positive")
    rng = np.random.default_rng(seed)
    if target_samples is not None:
        target_samples = np.asarray(target_samples, dtype=np.float64)
        if target_samples.ndim != 2 or target_samples.shape[1] != dim:
            raise ValueError(
                f"dimension mismatch: target_samples has shape {target_samples.shape}, expected (n, {dim})"
            )
        n = target_samples.shape[0]
        idx = rng.choice(n, size=n_components, replace=n < n_components)
        means = target_samples[idx].copy()
    else:
        means = init_scale * rng.standard_normal((n_components, dim))
    return GaussianMixturePotential(
        eps=eps,
        raw_weights=np.zeros(n_components),
        means=means,
        raw_log_vars=np.full((n_components, dim), np.log(init_scale)),
    )


def _as_batch(v, x, name="x"):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = x[None, :] if single else x
    if x2.ndim != 2 or x2.shape[1] != v.dim:
        raise ValueError(f"{name} must have trailing dimension {v.dim}, got shape {x.shape}")
    if not np.all(np.isfinite(x2)):
        raise ValueError(f"{name} contains non-finite values")
    return x2, single


def _component_log_pdf(v, x):
    """log N(x | r_k, eps Sigma_k) for each row and component, shape (N, K)."""
    cov = v.eps * v.variances
    diff = x[:, None, :] - v.means[None, :, :]
    return -0.5 * (np.sum(diff**2 / cov, axis=-1) + np.sum(np.log(cov), axis=-1) + v.dim * LOG_2PI)


def log_v(v: GaussianMixturePotential, x1):
    """Log-density of the (normalized) mixture v at ``x1``; accepts (D,) or (N, D)."""
    x, single = _as_batch(v, x1, "x1")
    out = logsumexp(v.log_weights + _component_log_pdf(v, x), axis=1)
    return float(out[0]) if single else out


def _plan_log_weights(v, x0):
    """Unnormalized log-weights and means of pi_v(.|x0), shapes (N, K), (N, K, D)."""
    sig = v.variances
    r = v.means
    # 0.5 m^T (eps S)^-1 m - 0.5 r^T (eps S)^-1 r with m = r + S x0, expanded to avoid cancellation
    quad = (x0 @ r.T + 0.5 * (x0**2) @ sig.T) / v.eps
    logw = v.log_weights + quad
    means = r[None, :, :] + sig[None, :, :] * x0[:, None, :]
    return logw, means


def log_c(v: GaussianMixturePotential, x0):
    """log c_v(x0) = log of the integral of exp(<x0, x1>/eps) v(x1) dx1."""
    x, single = _as_batch(v, x0, "x0")
    logw, _ = _plan_log_weights(v, x)
    out = logsumexp(logw, axis=1)
    return float(out[0]) if single else out


def conditional_plan(v: GaussianMixturePotential, x0) -> ConditionalPlanMixture:
    x, single = _as_batch(v, x0, "x0")
    if not single:
        raise ValueError("conditional_plan takes a single point x0")
    logw, means = _plan_log_weights(v, x)
    return ConditionalPlanMixture(
        weights=softmax(logw[0]),
        means=means[0],
        diag_covs=v.eps * v.variances,
    )


def conditional_moments(v: GaussianMixturePotential, x0):
    """Exact mean and covariance of pi_v(.|x0) for a batch of x0, shapes (N, D), (N, D, D)."""
    x, _ = _as_batch(v, x0, "x0")
    logw, means = _plan_log_weights(v, x)
    w = softmax(logw, axis=1)
    mean = np.einsum("nk,nkd->nd", w, means)
    centred = means - mean[:, None, :]
    cov = np.einsum("nk,nkd,nke->nde", w, centred, centred)
    diag = w @ (v.eps * v.variances)
    idx = np.arange(v.dim)
    cov[:, idx, idx] += diag
    return mean, cov


def _sample_from_log_weights(v, logw, means, rng):
    n = logw.shape[0]
    w = softmax(logw, axis=1)
    cdf = np.cumsum(w, axis=1)
    u = rng.random((n, 1))
    comp = np.minimum((u > cdf).sum(axis=1), v.n_components - 1)
    std = np.sqrt(v.eps * v.variances[comp])
    rows = np.arange(n)
    return means[rows, comp] + std * rng.standard_normal((n, v.dim))


def sample_conditional(v: GaussianMixturePotential, x0, n, rng) -> np.ndarray:
    """Draw ``n`` endpoints x1 ~ pi_v(.|x0) for a single start point."""
    x, single = _as_batch(v, x0, "x0")
    if not single:
        raise ValueError("sample_conditional takes a single point x0; use sample_endpoints for batches")
    if n == 0:
        return np.empty((0, v.dim))
    logw, means = _plan_log_weights(v, x)
    return _sample_from_log_weights(
        v, np.repeat(logw, n, axis=0), np.broadcast_to(means, (n,) + means.shape[1:]), rng
    )


def sample_endpoints(v: GaussianMixturePotential, x0, rng) -> np.ndarray:
    """One endpoint per row of ``x0`` (N, D)."""
    x, _ = _as_batch(v, x0, "x0")
    if x.shape[0] == 0:
        return np.empty((0, v.dim))
    logw, means = _plan_log_weights(v, x)
    return _sample_from_log_weights(v, logw, means, rng)


def drift_terms(v: GaussianMixturePotential, x, t) -> DriftAux:
    """Component quantities of the closed-form drift for x (N, D), t scalar or (N,)."""
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (x.shape[0],))
    if np.any(t >= 1.0) or np.any(t < 0.0) or not np.all(np.isfinite(t)):
        raise ValueError("drift is defined for t in [0, 1) only")
    eps = v.eps
    sig = v.variances[None, :, :]
    r = v.means[None, :, :]
    tau = (1.0 - t)[:, None, None]
    tt = t[:, None, None]
    prec = 1.0 / (eps * sig)
    A = tt / (eps * tau) + prec
    A_inv = 1.0 / A
    h = x[:, None, :] / (eps * tau) + prec * r
    u = A_inv * h
    log_terms = v.log_weights[None, :] + 0.5 * np.sum(
        -(r**2) * prec - np.log(eps * sig) - np.log(A) + h * u, axis=-1
    )
    resp = softmax(log_terms, axis=1)
    return DriftAux(A_inv, h, u, log_terms, resp)


def drift(v: GaussianMixturePotential, x, t):
    """SB drift g_v(x, t); accepts x (D,) or (N, D), t scalar or (N,)."""
    xb, single = _as_batch(v, x, "x")
    aux = drift_terms(v, xb, t)
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (xb.shape[0],))
    g = (np.einsum("nk,nkd->nd", aux.resp, aux.u) - xb) / (1.0 - t)[:, None]
    return g[0] if single else g


def lightsb_objective(v: GaussianMixturePotential, source_batch, target_batch) -> float:
    """Monte-Carlo estimate of E_p0 log c_v(x0) - E_p1 log v(x1)."""
    src, _ = _as_batch(v, np.atleast_2d(source_batch), "source_batch")
    tgt, _ = _as_batch(v, np.atleast_2d(target_batch), "target_batch")
    if src.shape[0] == 0 or tgt.shape[0] == 0:
        raise ValueError("batches must be nonempty")
    return float(np.mean(log_c(v, src)) - np.mean(log_v(v, tgt)))
