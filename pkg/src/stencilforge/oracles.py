"""Independent reference computations for the benchmark kernels.

These are deliberately written without any compiler machinery: the horizontal
diffusion oracle is a direct nested-loop evaluation of the flux-limited
formula, and the vertical advection oracle assembles and solves each column's
dense tridiagonal system. They are the ground-truth side of the dual-route
checks in the test suite.
"""

from __future__ import annotations

import numpy as np


def hdiff_reference(inp: np.ndarray, coeff: float) -> np.ndarray:
    """Flux-limited horizontal diffusion on a (ni+4, nj+4, nk) input block.

    Returns the (ni, nj, nk) output over the compute domain; indices written
    out longhand so the evaluation shares nothing with the stencil engines.
    """
    ni, nj, nk = inp.shape[0] - 4, inp.shape[1] - 4, inp.shape[2]
    lap = np.empty((ni + 2, nj + 2, nk))
    for i in range(-1, ni + 1):
        for j in range(-1, nj + 1):
            for k in range(nk):
                ii, jj = i + 2, j + 2
                lap[i + 1, j + 1, k] = 4.0 * inp[ii, jj, k] - (
                    inp[ii - 1, jj, k]
                    + inp[ii + 1, jj, k]
                    + inp[ii, jj - 1, k]
                    + inp[ii, jj + 1, k]
                )
    flx = np.empty((ni + 1, nj, nk))
    for i in range(-1, ni):
        for j in range(nj):
            for k in range(nk):
                v = lap[i + 2, j + 1, k] - lap[i + 1, j + 1, k]
                if v * (inp[i + 3, j + 2, k] - inp[i + 2, j + 2, k]) > 0.0:
                    v = 0.0
                flx[i + 1, j, k] = v
    fly = np.empty((ni, nj + 1, nk))
    for i in range(ni):
        for j in range(-1, nj):
            for k in range(nk):
                v = lap[i + 1, j + 2, k] - lap[i + 1, j + 1, k]
                if v * (inp[i + 2, j + 3, k] - inp[i + 2, j + 2, k]) > 0.0:
                    v = 0.0
                fly[i, j + 1, k] = v
    out = np.empty((ni, nj, nk))
    for i in range(ni):
        for j in range(nj):
            for k in range(nk):
                out[i, j, k] = inp[i + 2, j + 2, k] - coeff * (
                    flx[i + 1, j, k]
                    - flx[i, j, k]
                    + fly[i, j + 1, k]
                    - fly[i, j, k]
                )
    return out


def vadv_reference(
    a: np.ndarray, b: np.ndarray, c: np.ndarray, d: np.ndarray
) -> np.ndarray:
    """Solve the per-column tridiagonal system with a dense direct solve."""
    ni, nj, nk = b.shape
    x = np.empty((ni, nj, nk))
    for i in range(ni):
        for j in range(nj):
            m = np.zeros((nk, nk))
            for k in range(nk):
                m[k, k] = b[i, j, k]
                if k > 0:
                    m[k, k - 1] = a[i, j, k]
                if k < nk - 1:
                    m[k, k + 1] = c[i, j, k]
            x[i, j, :] = np.linalg.solve(m, d[i, j, :])
    return x


def make_diagonally_dominant(
    rng: np.random.Generator, shape: tuple[int, int, int]
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Random coefficient fields with |b| > |a| + |c| per point."""
    a = rng.uniform(0.1, 1.0, shape)
    c = rng.uniform(0.1, 1.0, shape)
    b = np.abs(a) + np.abs(c) + rng.uniform(0.5, 1.5, shape)
    d = rng.uniform(-1.0, 1.0, shape)
    return a, b, c, d
