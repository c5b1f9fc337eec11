"""Toy 2-D distributions for demos."""

import numpy as np


def swiss_roll(n, rng, noise=0.8):
    """2-D Swiss roll scaled to unit-ish spread (x and z coordinates of the 3-D roll)."""
    t = 1.5 * np.pi * (1.0 + 2.0 * rng.random(n))
    pts = np.stack([t * np.cos(t), t * np.sin(t)], axis=1)
    pts += noise * rng.standard_normal((n, 2))
    return pts / 7.5


def gaussian(n, rng, dim=2, scale=1.0):
    return scale * rng.standard_normal((n, dim))
