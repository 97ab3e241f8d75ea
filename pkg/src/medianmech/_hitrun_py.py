"""Pure-NumPy hit-and-run stepping kernel (fallback backend).

Vectorizes each step across chains; consumes the same pregenerated random
blocks, in the same logical order, as the compiled kernel in _hitrun.pyx.
"""

from __future__ import annotations

import numpy as np


def advance(a, b, x, ax, normals, uniforms, dir_tol, margin, countdown, thin,
            out, out_pos):
    """Advance every chain one step per random row; record every `thin` steps.

    Mutates `x` (chains, dim), `ax` (chains, n_con) and fills `out`
    (slots, chains, dim) starting at slot `out_pos` once `countdown` reaches
    zero. Returns (countdown, n_recorded).
    """
    steps = normals.shape[0]
    recorded = 0
    b_row = b[None, :]
    tol_row = dir_tol[None, :]
    for s in range(steps):
        u = normals[s]
        au = u @ a.T
        slack = b_row - ax
        np.maximum(slack, 0.0, out=slack)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = slack / au
        t_hi = np.where(au > tol_row, ratio, np.inf).min(axis=1)
        t_lo = np.where(au < -tol_row, ratio, -np.inf).max(axis=1)
        width = t_hi - t_lo
        good = np.isfinite(width) & (width > 0.0) & (t_lo <= 0.0) & (t_hi >= 0.0)
        t = t_lo + (margin + (1.0 - 2.0 * margin) * uniforms[s]) * width
        t = np.where(good, t, 0.0)
        x += t[:, None] * u
        ax += t[:, None] * au
        countdown -= 1
        if countdown == 0:
            out[out_pos + recorded] = x
            recorded += 1
            countdown = thin
    return countdown, recorded
