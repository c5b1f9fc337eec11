import numpy as np
import pytest

from lightsbm.oracle import (
    SinkhornNotConverged,
    gaussian_eot_plan,
    gaussian_grid,
    gaussian_sb_drift,
    grid_sinkhorn,
    sample_bridge_marginal,
    sinkhorn_cross_cov_1d,
)


def test_closed_form_1d_root():
    # 1-D cross covariance is the positive root of c^2 + eps c - a b = 0
    a, b, eps = 0.7, 1.8, 0.4
    c = gaussian_eot_plan([0.0], [[a]], [1.0], [[b]], eps).cross_cov[0, 0]
    assert c**2 + eps * c - a * b == pytest.approx(0.0, abs=1e-12)
    assert c > 0


def test_closed_form_vs_sinkhorn_single_config():
    closed = gaussian_eot_plan([0.0], [[1.5]], [0.5], [[1.0]], 1.0).cross_cov[0, 0]
    assert sinkhorn_cross_cov_1d(0.0, 1.5, 0.5, 1.0, 1.0) == pytest.approx(closed, rel=1e-4)


def test_sinkhorn_marginals():
    x, a = gaussian_grid(0.0, 1.0, 80)
    y, b = gaussian_grid(1.0, 0.5, 60)
    plan = grid_sinkhorn(a, x, b, y, 0.5, tol=1e-12)
    p = plan.plan
    np.testing.assert_allclose(p.sum(axis=1), a, atol=1e-10)
    np.testing.assert_allclose(p.sum(axis=0), b, atol=1e-9)
    with pytest.raises(SinkhornNotConverged):
        grid_sinkhorn(a, x, b, y, 0.01, tol=1e-14, max_iter=10)


def test_joint_covariance_psd_and_limits():
    rng = np.random.default_rng(0)
    c0, c1 = np.diag(rng.uniform(0.5, 2, 3)), np.diag(rng.uniform(0.5, 2, 3))
    for eps in (1e-3, 1.0, 100.0):
        o = gaussian_eot_plan(np.zeros(3), c0, np.ones(3), c1, eps)
        assert np.linalg.eigvalsh(o.joint_cov).min() > -1e-10
    # eps -> inf: independent coupling; eps -> 0: monotone map C0^1/2 C1^1/2
    assert np.abs(gaussian_eot_plan(np.zeros(3), c0, np.ones(3), c1, 1e6).cross_cov).max() < 1e-5
    small = gaussian_eot_plan(np.zeros(3), c0, np.ones(3), c1, 1e-8).cross_cov
    np.testing.assert_allclose(small, np.sqrt(c0 * c1), atol=1e-6)


def test_full_covariance_plan_has_entropic_coupling():
    # the plan density carries exp(<x0, x1> / eps), so the off-diagonal
    # precision block of the joint Gaussian is -I / eps
    rng = np.random.default_rng(1)
    a = rng.normal(size=(3, 3))
    c0 = a @ a.T + np.eye(3)
    b = rng.normal(size=(3, 3))
    c1 = b @ b.T + np.eye(3)
    eps = 0.7
    o = gaussian_eot_plan(np.zeros(3), c0, np.zeros(3), c1, eps)
    prec = np.linalg.inv(o.joint_cov)
    np.testing.assert_allclose(prec[:3, 3:], -np.eye(3) / eps, atol=1e-9)


def test_conditional_and_bridge_moments():
    rng = np.random.default_rng(2)
    o = gaussian_eot_plan([0.0, 1.0], np.diag([1.0, 0.5]), [1.0, -1.0], np.diag([2.0, 1.0]), 0.8)
    x0, x1 = o.sample_plan(200_000, rng)
    np.testing.assert_allclose(np.cov(np.hstack([x0, x1]), rowvar=False), o.joint_cov, atol=0.03)
    xt = sample_bridge_marginal(o, 1.0, 10, rng)
    assert xt.shape == (10, 2)
    # drift at t=0 is the conditional mean displacement
    x = rng.normal(size=(4, 2))
    mean, _ = o.conditional_moments(x)
    np.testing.assert_allclose(gaussian_sb_drift(o, x, 0.0), mean - x, atol=1e-12)
    with pytest.raises(ValueError):
        gaussian_sb_drift(o, x, 1.0)


def test_invalid_covariances():
    with pytest.raises(ValueError, match="positive definite"):
        gaussian_eot_plan([0.0], [[-1.0]], [0.0], [[1.0]], 1.0)
    with pytest.raises(ValueError, match="symmetric"):
        gaussian_eot_plan([0, 0], [[1, 0.5], [0, 1]], [0, 0], np.eye(2), 1.0)
    with pytest.raises(ValueError):
        gaussian_eot_plan([0.0], [[1.0]], [0.0], [[1.0]], 0.0)
