"""Interpolation plan shared by the compiled and numpy gridding backends."""

from dataclasses import dataclass

import numpy as np


def kb_kernel(u, width, beta):
    """Kaiser-Bessel spreading kernel, peak-normalized.

    I0(beta * sqrt(1 - (2u/width)^2)) / I0(beta) inside |u| < width/2, zero
    outside. Even in u, maximum 1 at u = 0.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    u = np.asarray(u, dtype=np.float64)
    out = np.zeros(u.shape, dtype=np.float64)
    inside = np.abs(u) < width / 2.0
    t = 1.0 - (2.0 * u[inside] / width) ** 2
    out[inside] = np.i0(beta * np.sqrt(t)) / np.i0(beta)
    if out.ndim == 0 or u.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class GridPlan:
    """Per-axis tap indices and weights for a batch of sample locations.

    ``indices[ax]`` is (M, W) intp into the oversampled grid (periodic wrap
    already applied); ``weights[ax]`` is (M, W) float64 kernel values.
    """

    indices: tuple
    weights: tuple
    width: int

    @property
    def n_samples(self):
        return self.indices[0].shape[0]


def make_plan(locations, grid_dims, width, beta):
    """Build the tap plan for ``locations`` (radians/voxel) on a padded grid.

    The continuous bin coordinate along axis ``ax`` is
    ``l * G/(2*pi) + G//2``; taps cover the ``width`` nearest bins with
    periodic wrap.
    """
    locations = np.asarray(locations, dtype=np.float64)
    if locations.ndim != 2 or locations.shape[1] != 3:
        raise ValueError("locations must be an (M, 3) array")
    offs = np.arange(width, dtype=np.float64)
    indices = []
    weights = []
    for ax in range(3):
        g = int(grid_dims[ax])
        t = locations[:, ax] * (g / (2.0 * np.pi)) + g // 2
        start = np.ceil(t - width / 2.0)
        taps = start[:, None] + offs[None, :]
        weights.append(kb_kernel(taps - t[:, None], width, beta))
        indices.append(np.mod(taps, g).astype(np.intp))
    return GridPlan(indices=tuple(indices), weights=tuple(weights), width=int(width))
