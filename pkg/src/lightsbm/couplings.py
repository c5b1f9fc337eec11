"""Plans pi in Pi(p0, p1) accessible by samples: independent, minibatch OT, paired."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .processes import PairBatch

KINDS = ("independent", "minibatch_ot", "paired")


def _store(x, name):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[0] == 0:
        raise ValueError(f"{name} store is empty")
    return x


def independent_pairs(src, tgt, n, rng) -> PairBatch:
    src = _store(src, "source")
    tgt = _store(tgt, "target")
    if src.shape[1] != tgt.shape[1]:
        raise ValueError("source and target dimensions differ")
    i = rng.integers(0, src.shape[0], size=n)
    j = rng.integers(0, tgt.shape[0], size=n)
    return PairBatch(src[i], tgt[j])


def solve_assignment(cost) -> np.ndarray:
    """Exact minimum-cost perfect matching; returns ``perm`` with row i -> column perm[i]."""
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError(f"cost matrix must be square, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix contains non-finite entries")
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(cost.shape[0], dtype=np.int64)
    perm[rows] = cols
    return perm


def minibatch_ot_pairs(src, tgt, n, rng) -> PairBatch:
    """Draw n points per side without replacement and pair them by exact OT for |x0 - x1|^2 / 2."""
    src = _store(src, "source")
    tgt = _store(tgt, "target")
    if n > src.shape[0] or n > tgt.shape[0]:
        raise ValueError(f"minibatch size {n} exceeds store sizes {src.shape[0]}, {tgt.shape[0]}")
    x0 = src[rng.choice(src.shape[0], size=n, replace=False)]
    x1 = tgt[rng.choice(tgt.shape[0], size=n, replace=False)]
    cost = 0.5 * np.sum((x0[:, None, :] - x1[None, :, :]) ** 2, axis=-1)
    return PairBatch(x0, x1[solve_assignment(cost)])


def paired_pairs(store, n, rng) -> PairBatch:
    """Row draws with replacement from an aligned (x0, x1) store given as a PairBatch."""
    if not isinstance(store, PairBatch):
        x0, x1 = store
        if len(x0) != len(x1):
            raise ValueError("paired store is misaligned: row counts differ")
        store = PairBatch(x0, x1)
    if len(store) == 0:
        raise ValueError("paired store is empty")
    i = rng.integers(0, len(store), size=n)
    return PairBatch(store.x0[i], store.x1[i])


@dataclass
class CouplingSampler:
    """Stateful source of pair batches for the training loop.

    For ``minibatch_ot``, ``ot_block`` splits each batch into independent
    exact-OT minibatches of that size (the last block takes the remainder),
    which keeps large batches affordable; a union of minibatch plans is still
    a plan between the marginals.
    """

    kind: str
    source: np.ndarray
    target: np.ndarray
    batch_size: int = 128
    seed: int = 0
    ot_block: int | None = None
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown sampler kind {self.kind!r}; expected one of {KINDS}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self.source = _store(self.source, "source")
        self.target = _store(self.target, "target")
        if self.source.shape[1] != self.target.shape[1]:
            raise ValueError(
                f"dimension mismatch: source D={self.source.shape[1]}, target D={self.target.shape[1]}"
            )
        if self.kind == "paired" and self.source.shape[0] != self.target.shape[0]:
            raise ValueError("paired sampler needs row-aligned stores of equal length")
        self.rng = np.random.default_rng(self.seed)

    @property
    def dim(self) -> int:
        return self.source.shape[1]

    def sample(self) -> PairBatch:
        if self.kind == "independent":
            return independent_pairs(self.source, self.target, self.batch_size, self.rng)
        if self.kind == "minibatch_ot":
            block = self.ot_block or self.batch_size
            sizes = [block] * (self.batch_size // block)
            if self.batch_size % block:
                sizes.append(self.batch_size % block)
            parts = [minibatch_ot_pairs(self.source, self.target, m, self.rng) for m in sizes]
            return PairBatch(
                np.concatenate([p.x0 for p in parts]), np.concatenate([p.x1 for p in parts])
            )
        return paired_pairs(PairBatch(self.source, self.target), self.batch_size, self.rng)
