"""Numpy fallback for the gridding hot loops.

Loops over the W^3 tap offsets with vectorized gathers/scatters over all
samples; np.add.at gives deterministic sequential accumulation.
"""

import numpy as np


def interpolate(grid, plan):
    ix, iy, iz = plan.indices
    wx, wy, wz = plan.weights
    w = plan.width
    m = plan.n_samples
    out = np.zeros(m, dtype=np.complex128)
    rows = np.arange(m)
    for a in range(w):
        for b in range(w):
            wab = wx[:, a] * wy[:, b]
            sub = grid[ix[:, a], iy[:, b], :]
            for c in range(w):
                out += (wab * wz[:, c]) * sub[rows, iz[:, c]]
    return out


def spread(values, plan, grid_shape):
    ix, iy, iz = plan.indices
    wx, wy, wz = plan.weights
    w = plan.width
    values = np.asarray(values, dtype=np.complex128)
    grid = np.zeros(grid_shape, dtype=np.complex128)
    for a in range(w):
        for b in range(w):
            vab = values * (wx[:, a] * wy[:, b])
            for c in range(w):
                np.add.at(grid, (ix[:, a], iy[:, b], iz[:, c]), vab * wz[:, c])
    return grid
