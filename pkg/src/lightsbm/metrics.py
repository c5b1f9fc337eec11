"""Evaluation metrics: (c)BW2-UVP, energy distance, dynamic KL between drifts.

BW-UVP values are percentages normalized by half the total variance of the
reference (second) argument.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .processes import euler_maruyama

EIG_FLOOR = 1e-12
COV_RIDGE = 1e-6
LARGE_POOL = 6000


@dataclass
class MetricReport:
    name: str
    value: float
    n_samples: int
    details: dict = field(default_factory=dict)

    def as_text(self) -> str:
        lines = [f"metric={self.name}", f"value={self.value:.10g}", f"n_samples={self.n_samples}"]
        for k, v in self.details.items():
            if np.ndim(v) == 0:
                lines.append(f"{k}={v}")
        return "\n".join(lines)


def _sqrtm_psd(m):
    w, q = np.linalg.eigh(0.5 * (m + m.T))
    return (q * np.sqrt(np.maximum(w, EIG_FLOOR))) @ q.T


def bures_wasserstein_sq(m_a, cov_a, m_b, cov_b) -> float:
    """Squared 2-Wasserstein distance between N(m_a, cov_a) and N(m_b, cov_b)."""
    root_b = _sqrtm_psd(cov_b)
    cross = _sqrtm_psd(root_b @ cov_a @ root_b)
    bures = np.trace(cov_a) + np.trace(cov_b) - 2.0 * np.trace(cross)
    return float(np.sum((m_a - m_b) ** 2) + max(bures, 0.0))


def bw_uvp_gaussian(m_a, cov_a, m_b, cov_b) -> float:
    return 100.0 * bures_wasserstein_sq(m_a, cov_a, m_b, cov_b) / (0.5 * np.trace(cov_b))


def _fit(x):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n, d = x.shape
    if n < d + 1:
        raise ValueError(f"need at least D+1={d + 1} samples, got {n}")
    cov = np.atleast_2d(np.cov(x, rowvar=False))
    if np.linalg.eigvalsh(cov).min() <= 0:
        warnings.warn("singular sample covariance; adding 1e-6 I", RuntimeWarning, stacklevel=3)
        cov = cov + COV_RIDGE * np.eye(d)
    return x.mean(axis=0), cov


def bw_uvp(samples_a, samples_b) -> float:
    """BW2-UVP (%) between Gaussian fits of two sample clouds; ``samples_b`` is the reference."""
    m_a, c_a = _fit(samples_a)
    m_b, c_b = _fit(samples_b)
    return bw_uvp_gaussian(m_a, c_a, m_b, c_b)


def cbw_uvp(model_sampler, oracle_sampler, x0_probes, n_per_x0=1000) -> MetricReport:
    """Mean over probe points of bw_uvp(model pi(.|x0), oracle pi*(.|x0)).

    Samplers are called as ``sampler(x0, n)`` and return an (n, D) array.
    """
    probes = np.atleast_2d(x0_probes)
    if probes.shape[0] == 0:
        raise ValueError("probe set is empty")
    vals = np.array([bw_uvp(model_sampler(x0, n_per_x0), oracle_sampler(x0, n_per_x0)) for x0 in probes])
    return MetricReport("cbw-uvp", float(vals.mean()), probes.shape[0] * n_per_x0, {"per_probe": vals})


def cbw_uvp_moments(model_moments, oracle_moments, x0_probes) -> MetricReport:
    """cBW2-UVP from exact conditional moments (the infinite-sample limit of :func:`cbw_uvp`).

    Moment functions map an (N, D) probe batch to (means (N, D), covs (N, D, D));
    a single (D, D) covariance is broadcast.
    """
    probes = np.atleast_2d(x0_probes)
    if probes.shape[0] == 0:
        raise ValueError("probe set is empty")
    ma, ca = model_moments(probes)
    mb, cb = oracle_moments(probes)
    ca = np.broadcast_to(ca, (probes.shape[0],) + ca.shape[-2:])
    cb = np.broadcast_to(cb, (probes.shape[0],) + cb.shape[-2:])
    vals = np.array([bw_uvp_gaussian(ma[i], ca[i], mb[i], cb[i]) for i in range(probes.shape[0])])
    return MetricReport("cbw-uvp", float(vals.mean()), probes.shape[0], {"per_probe": vals, "exact": True})


def _energy_from_dist(dist, n_a):
    d_ab = dist[:n_a, n_a:].mean()
    d_aa = dist[:n_a, :n_a].mean()
    d_bb = dist[n_a:, n_a:].mean()
    return 2.0 * d_ab - d_aa - d_bb


def energy_distance(samples_a, samples_b) -> float:
    """V-statistic 2E|A-B| - E|A-A'| - E|B-B'| over all pairs."""
    a = np.atleast_2d(np.asarray(samples_a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(samples_b, dtype=np.float64))
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("sample sets must be nonempty")
    pooled = np.concatenate([a, b])
    return float(max(_energy_from_dist(cdist(pooled, pooled), a.shape[0]), 0.0))


def _pooled_distances(pooled, block):
    """Pairwise distances; stored in float32 above LARGE_POOL points to halve memory."""
    n = pooled.shape[0]
    if n <= LARGE_POOL:
        return cdist(pooled, pooled)
    dist = np.empty((n, n), dtype=np.float32)
    for lo in range(0, n, block):
        dist[lo : lo + block] = cdist(pooled[lo : lo + block], pooled)
    return dist


def energy_permutation_test(samples_a, samples_b, n_perm=200, alpha=0.05, rng=None, block=1000):
    """Energy statistic, its permutation-null (1 - alpha) quantile, and p-value.

    All relabelings are scored with one blocked product ``dist @ masks``
    accumulated in float64, so large samples stay affordable.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    a = np.atleast_2d(np.asarray(samples_a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(samples_b, dtype=np.float64))
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("sample sets must be nonempty")
    pooled = np.concatenate([a, b])
    n_a, n = a.shape[0], pooled.shape[0]
    n_b = n - n_a
    dist = _pooled_distances(pooled, block)

    masks = np.zeros((n, n_perm + 1))
    masks[:n_a, 0] = 1.0  # column 0 is the observed labeling
    for i in range(n_perm):
        masks[rng.permutation(n)[:n_a], i + 1] = 1.0
    rows = np.empty_like(masks)
    for lo in range(0, n, block):
        rows[lo : lo + block] = dist[lo : lo + block].astype(np.float64) @ masks
    total = float(sum(dist[lo : lo + block].astype(np.float64).sum() for lo in range(0, n, block)))
    s_aa = np.sum(masks * rows, axis=0)
    s_ab = np.sum((1.0 - masks) * rows, axis=0)
    s_bb = total - s_aa - 2.0 * s_ab
    scores = 2.0 * s_ab / (n_a * n_b) - s_aa / n_a**2 - s_bb / n_b**2
    # observed statistic from block means: exactly 0 for identical samples
    stat, null = max(_energy_from_dist(dist, n_a), 0.0), scores[1:]
    threshold = float(np.quantile(null, 1.0 - alpha))
    p_value = float((1 + np.sum(null >= stat)) / (1 + n_perm))
    return float(stat), threshold, p_value


def _trapezoid(y, x):
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


def dynamic_kl(g_model, g_star, bridge_sampler, model_x0_sampler, eps, t_grid, n, n_sde_steps=None, rng=None):
    """KL(T*||S) and KL(S||T*) via the time integrals of squared drift gaps.

    ``bridge_sampler(t, n, rng)`` draws x_t ~ T*; ``model_x0_sampler(n, rng)``
    draws starting points for the model SDE, which is simulated by
    Euler-Maruyama on a grid containing ``t_grid``. Drift callables take
    (x (N, D), t scalar).
    """
    rng = np.random.default_rng(0) if rng is None else rng
    t_grid = np.asarray(t_grid, dtype=np.float64)
    if t_grid.min() < 0 or t_grid.max() > 1 - 1e-4 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be increasing inside [0, 1 - 1e-4]")

    fwd = np.array(
        [np.mean(np.sum((g_star(x, t) - g_model(x, t)) ** 2, axis=1)) for t in t_grid
         for x in [bridge_sampler(t, n, rng)]]
    )

    # model paths on a uniform grid fine enough to contain t_grid points approximately
    steps = n_sde_steps or 1000
    traj = euler_maruyama(g_model, model_x0_sampler(n, rng), eps, steps, rng)
    idx = np.clip(np.rint(t_grid * steps).astype(int), 0, steps - 1)
    rev = np.array(
        [np.mean(np.sum((g_star(traj.points[:, i], traj.times[i]) - g_model(traj.points[:, i], traj.times[i])) ** 2, axis=1))
         for i in idx]
    )
    t_used = traj.times[idx]
    kl_fwd = _trapezoid(fwd, t_grid) / (2.0 * eps)
    kl_rev = _trapezoid(rev, t_used) / (2.0 * eps)
    return kl_fwd, kl_rev, {"t": t_grid, "l2_fwd": fwd, "l2_rev": rev}
