"""JSON checkpoints and headerless CSV datasets."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .potential import GaussianMixturePotential

FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    potential: GaussianMixturePotential
    train_meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        v = self.potential
        return {
            "format_version": FORMAT_VERSION,
            "eps": v.eps,
            "dim": v.dim,
            "n_components": v.n_components,
            "raw_weights": v.raw_weights.tolist(),
            "means": v.means.tolist(),
            "raw_log_vars": v.raw_log_vars.tolist(),
            "train_meta": self.train_meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Checkpoint":
        version = d.get("format_version")
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format_version {version!r}")
        v = GaussianMixturePotential(
            eps=d["eps"],
            raw_weights=np.array(d["raw_weights"], dtype=np.float64),
            means=np.array(d["means"], dtype=np.float64).reshape(d["n_components"], d["dim"]),
            raw_log_vars=np.array(d["raw_log_vars"], dtype=np.float64).reshape(
                d["n_components"], d["dim"]
            ),
        )
        if v.dim != d["dim"] or v.n_components != d["n_components"]:
            raise ValueError("checkpoint arrays inconsistent with dim / n_components")
        return cls(v, dict(d.get("train_meta", {})))


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    # json emits floats via repr, which round-trips exactly
    Path(path).write_text(json.dumps(ckpt.to_dict(), indent=1) + "\n")


def load_checkpoint(path) -> Checkpoint:
    return Checkpoint.from_dict(json.loads(Path(path).read_text()))


def write_csv(path, rows) -> None:
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    np.savetxt(path, rows, delimiter=",", fmt="%.17g")


def read_csv(path) -> np.ndarray:
    """Rows of comma-separated floats, no header; rejects ragged or non-finite data."""
    rows = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                vals = [float(tok) for tok in line.split(",")]
            except ValueError as err:
                raise ValueError(f"{path}:{lineno}: {err}") from None
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise ValueError(f"{path}:{lineno}: expected {width} columns, got {len(vals)}")
            rows.append(vals)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    arr = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{path}: non-finite values")
    return arr
