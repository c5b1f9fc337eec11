"""Sampling-based estimators for a generic Schrödinger potential phi.

``phi(x) = v(x) exp(|x|^2 / (2 eps))``. The drift of the bridge it induces is

    g(x, t) = eps * grad_x log E_{z ~ N(0, I)} phi(x + sqrt((1 - t) eps) z)
            = (E_{p(x'|x)}[x'] - x) / (1 - t),  p(x'|x) ∝ exp(-|x' - x|^2 / (2 eps (1 - t))) phi(x').

The first form gives a self-normalized Monte-Carlo estimator, the second an
MCMC estimator via unadjusted Langevin dynamics. Neither needs phi to be a
mixture, which is what makes them useful as independent checks of the closed
form in :mod:`lightsbm.potential`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp, softmax

from .potential import GaussianMixturePotential, _component_log_pdf, log_v
from .trainer import PARAM_NAMES


@dataclass
class PotentialFn:
    """Batched log phi and its gradients; all callables take x of shape (N, D).

    ``grad_theta_log_phi`` (optional) returns a flat (N, P) array of parameter
    gradients of log phi.
    """

    log_phi: Callable[[np.ndarray], np.ndarray]
    grad_x_log_phi: Callable[[np.ndarray], np.ndarray]
    grad_theta_log_phi: Optional[Callable[[np.ndarray], np.ndarray]] = None


@dataclass
class ULAConfig:
    n_steps: int = 50
    step_size: float = 1e-4
    n_samples: int = 100


def _responsibilities(v, x):
    logp = v.log_weights + _component_log_pdf(v, x)
    return softmax(logp, axis=1)


def phi_from_mixture(v: GaussianMixturePotential) -> PotentialFn:
    eps = v.eps

    def log_phi(x):
        x = np.atleast_2d(x)
        return log_v(v, x) + 0.5 * np.sum(x**2, axis=1) / eps

    def grad_x(x):
        x = np.atleast_2d(x)
        gamma = _responsibilities(v, x)
        cov = eps * v.variances
        # sum_k gamma_k (r_k - x) / (eps Sigma_k)  +  x / eps
        score = np.einsum("nk,nkd->nd", gamma, (v.means[None] - x[:, None, :]) / cov[None])
        return score + x / eps

    def grad_theta(x):
        x = np.atleast_2d(x)
        gamma = _responsibilities(v, x)
        sig = v.variances
        diff = x[:, None, :] - v.means[None]
        d_w = gamma - v.weights[None]
        d_r = gamma[:, :, None] * diff / (eps * sig[None])
        d_s = 0.5 * gamma[:, :, None] * (diff**2 / (eps * sig[None]) - 1.0)
        n = x.shape[0]
        return np.concatenate([d_w, d_r.reshape(n, -1), d_s.reshape(n, -1)], axis=1)

    return PotentialFn(log_phi, grad_x, grad_theta)


def unflatten_mixture_grad(v: GaussianMixturePotential, flat) -> dict:
    """Split a flat parameter vector from :func:`phi_from_mixture` into named arrays."""
    k, d = v.n_components, v.dim
    flat = np.asarray(flat)
    return {
        "raw_weights": flat[:k],
        "means": flat[k : k + k * d].reshape(k, d),
        "raw_log_vars": flat[k + k * d :].reshape(k, d),
    }


def flatten_mixture_grad(grads: dict) -> np.ndarray:
    return np.concatenate([np.ravel(grads[k]) for k in PARAM_NAMES])


def mc_drift(phi: PotentialFn, x, t, eps, n, rng) -> np.ndarray:
    """Self-normalized MC drift at a single point.

    Uses ``grad phi = phi * grad log phi`` so that numerator and denominator
    share one z-batch and one set of log-weights.
    """
    if not t < 1:
        raise ValueError("t must be < 1")
    if n < 1:
        raise ValueError("n must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    z = rng.standard_normal((n, x.size))
    xs = x[None, :] + np.sqrt((1.0 - t) * eps) * z
    logw = np.asarray(phi.log_phi(xs), dtype=np.float64)
    if not np.any(np.isfinite(logw)) or logsumexp(logw) == -np.inf:
        raise FloatingPointError(
            "all potential evaluations underflowed; increase n or rescale phi"
        )
    w = softmax(logw)
    return eps * (w @ phi.grad_x_log_phi(xs))


def ula_sample(grad_log_density, x_init, n_steps, step_size, n_chains, rng) -> np.ndarray:
    """Unadjusted Langevin: x <- x + h grad log p(x) + sqrt(2 h) xi. Returns final states.

    ``x_init`` is a single (D,) start shared by all chains or an (n_chains, D) array.
    """
    if not step_size > 0:
        raise ValueError("step_size must be positive")
    x_init = np.asarray(x_init, dtype=np.float64)
    x = np.broadcast_to(x_init, (n_chains, x_init.shape[-1])).copy()
    noise = np.sqrt(2.0 * step_size)
    for i in range(n_steps):
        x = x + step_size * grad_log_density(x) + noise * rng.standard_normal(x.shape)
        if not np.all(np.isfinite(x)):
            raise FloatingPointError(f"ULA produced non-finite state at step {i}")
    return x


def _posterior_grad(phi, x_t, t, eps):
    scale = eps * (1.0 - t)

    def grad(xp):
        return -(xp - x_t) / scale + phi.grad_x_log_phi(xp)

    return grad


def mcmc_drift(phi: PotentialFn, x_t, t, eps, ula_config: ULAConfig, rng) -> np.ndarray:
    """Drift via the mean of p(x'|x_t), sampled by ULA chains started at x_t."""
    if not t < 1:
        raise ValueError("t must be < 1")
    x_t = np.asarray(x_t, dtype=np.float64)
    xs = ula_sample(
        _posterior_grad(phi, x_t, t, eps),
        x_t,
        ula_config.n_steps,
        ula_config.step_size,
        ula_config.n_samples,
        rng,
    )
    return (xs.mean(axis=0) - x_t) / (1.0 - t)


def mcmc_loss_grad(phi: PotentialFn, pairs, ts, xts, eps, ula_config: ULAConfig, rng) -> np.ndarray:
    """Parameter gradient of (1/(2 eps)) E||g - (x1 - x_t)/(1 - t)||^2 from ULA samples.

    Per sample: grad g = Cov_{p(x'|x_t)}(x', grad_theta log phi(x')) / (1 - t),
    with g itself estimated on an independent set of chains.
    """
    if phi.grad_theta_log_phi is None:
        raise ValueError("potential has no parameter-gradient hook")
    ts = np.asarray(ts, dtype=np.float64)
    xts = np.atleast_2d(np.asarray(xts, dtype=np.float64))
    total = None
    for n in range(xts.shape[0]):
        t, x_t = ts[n], xts[n]
        g = mcmc_drift(phi, x_t, t, eps, ula_config, rng)
        target = (pairs.x1[n] - x_t) / (1.0 - t)
        xs = ula_sample(
            _posterior_grad(phi, x_t, t, eps),
            x_t,
            ula_config.n_steps,
            ula_config.step_size,
            ula_config.n_samples,
            rng,
        )
        gth = phi.grad_theta_log_phi(xs)  # (S, P)
        jac = (xs - xs.mean(axis=0)).T @ (gth - gth.mean(axis=0)) / xs.shape[0]  # (D, P)
        contrib = jac.T @ (g - target) / (1.0 - t)
        total = contrib if total is None else total + contrib
    return total / (eps * xts.shape[0])
