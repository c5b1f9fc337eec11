"""One-pass bridge matching for the Gaussian-mixture potential (LightSB-M).

Each iteration draws pairs from a plan, a time and a Brownian-bridge point,
then regresses the closed-form drift onto ``(x1 - x_t) / (1 - t)``.
Gradients are hand-derived through the drift formula.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .couplings import CouplingSampler
from .io import Checkpoint
from .potential import VAR_FLOOR, GaussianMixturePotential, drift_terms, init_potential
from .processes import PairBatch, sample_bridge_point

logger = logging.getLogger(__name__)

PARAM_NAMES = ("raw_weights", "means", "raw_log_vars")


@dataclass
class TrainConfig:
    eps: float
    n_components: int = 100
    batch_size: int = 128
    n_iters: int = 10_000
    learning_rate: float = 1e-3
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    t_max: float = 1.0 - 1e-4
    seed: int = 0
    sampler: str = "independent"
    init_scale: float = 0.1
    checkpoint_every: int = 1000
    ot_block: int | None = None
    # optimize eps * raw_weights, i.e. logits move on the 1/eps scale of the plan log-weights
    eps_scaled_logits: bool = True

    def __post_init__(self):
        if not 0.0 < self.t_max < 1.0:
            raise ValueError("t_max must lie in (0, 1)")
        if self.n_iters < 1:
            raise ValueError("n_iters must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.n_components < 1 or self.batch_size < 1:
            raise ValueError("n_components and batch_size must be >= 1")


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0

    @classmethod
    def zeros_like(cls, params: dict) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    loss_trace: np.ndarray
    checkpoints: list = field(default_factory=list)


class TrainingError(RuntimeError):
    def __init__(self, message, iteration, last_checkpoint):
        super().__init__(message)
        self.iteration = iteration
        self.last_checkpoint = last_checkpoint


def _validate_batch(pairs, ts, xts, t_max):
    ts = np.asarray(ts, dtype=np.float64)
    xts = np.atleast_2d(np.asarray(xts, dtype=np.float64))
    if ts.shape != (len(pairs),) or xts.shape != pairs.x1.shape:
        raise ValueError("pairs, ts and xts must describe the same batch")
    if np.any(ts > t_max) or np.any(ts < 0):
        raise ValueError(f"times must lie in [0, t_max={t_max}]")
    return ts, xts


def _residual(v, pairs, ts, xts):
    aux = drift_terms(v, xts, ts)
    tau = 1.0 - ts
    g = (np.einsum("nk,nkd->nd", aux.resp, aux.u) - xts) / tau[:, None]
    target = (pairs.x1 - xts) / tau[:, None]
    return aux, g - target


def matching_loss(v: GaussianMixturePotential, pairs: PairBatch, ts, xts, t_max=1.0 - 1e-4) -> float:
    """(1/N) sum ||g_v(x_t, t) - (x1 - x_t) / (1 - t)||^2."""
    ts, xts = _validate_batch(pairs, ts, xts, t_max)
    _, res = _residual(v, pairs, ts, xts)
    return float(np.mean(np.sum(res**2, axis=1)))


def loss_and_gradient(v: GaussianMixturePotential, pairs: PairBatch, ts, xts, t_max=1.0 - 1e-4):
    ts, xts = _validate_batch(pairs, ts, xts, t_max)
    aux, res = _residual(v, pairs, ts, xts)
    n = len(pairs)
    loss = float(np.mean(np.sum(res**2, axis=1)))

    eps = v.eps
    sig = v.variances
    r = v.means
    tau = 1.0 - ts
    w, u, A_inv = aux.resp, aux.u, aux.A_inv_diag

    e = (2.0 / n) * res / tau[:, None]  # dL/d(sum_k w_k u_k)
    d_u = w[:, :, None] * e[:, None, :]
    d_w = np.einsum("nd,nkd->nk", e, u)
    d_logit = w * (d_w - np.sum(w * d_w, axis=1, keepdims=True))

    diff = u - r[None]
    d_means = np.sum(d_u * A_inv + d_logit[:, :, None] * diff, axis=0) / (eps * sig)
    d_sig = np.sum(
        d_u * A_inv * diff + 0.5 * d_logit[:, :, None] * (diff**2 + A_inv - eps * sig[None]),
        axis=0,
    ) / (eps * sig)
    # d sig / d raw = sig where the floor is inactive
    d_raw_log_vars = np.where(np.exp(v.raw_log_vars) > VAR_FLOOR, d_sig, 0.0)
    grads = {
        "raw_weights": d_logit.sum(axis=0),
        "means": d_means,
        "raw_log_vars": d_raw_log_vars,
    }
    return loss, grads


def loss_gradient(v, pairs, ts, xts, t_max=1.0 - 1e-4) -> dict:
    """Exact gradient of :func:`matching_loss` w.r.t. the raw parameters."""
    return loss_and_gradient(v, pairs, ts, xts, t_max)[1]


def adam_step(params: dict, grads: dict, state: AdamState, lr, betas=(0.9, 0.999), adam_eps=1e-8, lr_scale=None):
    """Bias-corrected Adam; returns new params and state, inputs untouched.

    ``lr_scale`` optionally maps parameter names to learning-rate multipliers.
    """
    b1, b2 = betas
    step = state.step + 1
    new_params, m_new, v_new = {}, {}, {}
    for k, p in params.items():
        lr_k = lr * (lr_scale or {}).get(k, 1.0)
        g = grads[k]
        m_new[k] = b1 * state.m[k] + (1 - b1) * g
        v_new[k] = b2 * state.v[k] + (1 - b2) * g * g
        m_hat = m_new[k] / (1 - b1**step)
        v_hat = v_new[k] / (1 - b2**step)
        new_params[k] = p - lr_k * m_hat / (np.sqrt(v_hat) + adam_eps)
    return new_params, AdamState(m_new, v_new, step)


def _params(v):
    return {k: getattr(v, k).copy() for k in PARAM_NAMES}


def _potential(eps, params):
    return GaussianMixturePotential(eps, **params)


def sample_training_batch(sampler, eps, t_max, rng):
    pairs = sampler.sample()
    ts = rng.uniform(0.0, t_max, size=len(pairs))
    xts = sample_bridge_point(pairs.x0, pairs.x1, ts, eps, rng)
    return pairs, ts, xts


def train(config: TrainConfig, src_store, tgt_store, paired_target=None, checkpoint_callback=None) -> TrainResult:
    """Run the bridge-matching loop; ``paired_target`` overrides ``tgt_store`` rows for paired plans."""
    tgt = tgt_store if paired_target is None else paired_target
    sampler = CouplingSampler(
        kind=config.sampler,
        source=src_store,
        target=tgt,
        batch_size=config.batch_size,
        seed=config.seed,
        ot_block=config.ot_block,
    )
    rng = np.random.default_rng([config.seed, 1])
    v = init_potential(
        sampler.dim,
        config.n_components,
        config.eps,
        target_samples=sampler.target,
        init_scale=config.init_scale,
        seed=config.seed,
    )
    params = _params(v)
    state = AdamState.zeros_like(params)
    trace = np.empty(config.n_iters)
    checkpoints = []
    meta = {"seed": config.seed, "sampler": config.sampler, "config": asdict(config)}
    last = Checkpoint(v.copy(), dict(meta, iterations=0, loss=None))
    start = time.perf_counter()
    # Adam is invariant to gradient scale, so optimizing eps * logits at rate lr
    # is the same as optimizing the logits at rate lr / eps
    lr_scale = {"raw_weights": 1.0 / config.eps} if config.eps_scaled_logits else None

    for it in range(config.n_iters):
        pairs, ts, xts = sample_training_batch(sampler, config.eps, config.t_max, rng)
        loss, grads = loss_and_gradient(v, pairs, ts, xts, config.t_max)
        if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
            raise TrainingError(f"non-finite loss at iteration {it}", it, last)
        trace[it] = loss
        params, state = adam_step(
            params, grads, state, config.learning_rate, config.adam_betas, config.adam_eps, lr_scale
        )
        v = _potential(config.eps, params)
        done = it + 1
        if done % config.checkpoint_every == 0 or done == config.n_iters:
            last = Checkpoint(v.copy(), dict(meta, iterations=done, loss=float(loss)))
            checkpoints.append(last)
            if checkpoint_callback is not None:
                checkpoint_callback(done, last)
            logger.info("iter %d loss %.5g (%.1fs)", done, loss, time.perf_counter() - start)

    return TrainResult(last, trace, checkpoints)
