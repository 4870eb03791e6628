"""Batched one-dimensional maximisation on a bounded interval."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def maximize_rows(
    objective: Callable[[np.ndarray], np.ndarray],
    n_rows: int,
    lo: float = 1.0,
    hi: float = 2.0,
    n_grid: int = 64,
    iters: int = 60,
) -> np.ndarray:
    """Maximise one scalar function per row.

    ``objective`` maps an ``(n_rows, g)`` array of candidate points to an
    ``(n_rows, g)`` array of values. A grid scan picks the best of ``n_grid``
    points; golden-section search then refines inside the neighbouring grid
    cells. The returned point is never worse than the best grid point.
    """
    grid = np.linspace(lo, hi, n_grid)
    G = np.broadcast_to(grid, (n_rows, n_grid))
    vals = objective(G)
    best = np.argmax(vals, axis=1)
    x_grid = grid[best]
    f_grid = vals[np.arange(n_rows), best]

    step = (hi - lo) / (n_grid - 1)
    a = np.maximum(x_grid - step, lo)
    b = np.minimum(x_grid + step, hi)
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc = objective(c[:, None])[:, 0]
    fd = objective(d[:, None])[:, 0]
    for _ in range(iters):
        left = fc >= fd  # maximum lies in [a, d]
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new_c = b - INV_PHI * (b - a)
        new_d = a + INV_PHI * (b - a)
        # reuse the surviving interior point
        c_next = np.where(left, new_c, d)
        d_next = np.where(left, c, new_d)
        f_new = objective(np.where(left, new_c, new_d)[:, None])[:, 0]
        fc, fd = np.where(left, f_new, fd), np.where(left, fc, f_new)
        c, d = c_next, d_next
    x = 0.5 * (a + b)
    fx = objective(x[:, None])[:, 0]
    return np.where(fx >= f_grid, x, x_grid)

