"""Pure-NumPy implementations of the strided 3D convolution primitives.

The three contractions below are the complete compute core of the
autoencoder: correlation (conv forward / transposed-conv input gradient),
its adjoint scatter (transposed-conv forward / conv input gradient), and
the weight-gradient contraction shared by both layer types. All functions
take C-contiguous float64 arrays; padding and cropping are handled by the
caller, which keeps every kernel a plain dense contraction.

Index conventions (s = stride, k = kernel size, kappa = (kx, ky, kz)):

    corr3d:    y[b, o]        = sum_{a, kappa} w[b, a, kappa] * x[a, o*s + kappa]
    scatter3d: out[a, o*s+kappa] += sum_b      u[b, o] * w[b, a, kappa]
    wgrad3d:   dw[b, a, kappa] = sum_o         u[b, o] * x[a, o*s + kappa]
"""

from __future__ import annotations

from itertools import product

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BACKEND = "numpy"


def corr3d(x: np.ndarray, w: np.ndarray, stride: int) -> np.ndarray:
    """Strided correlation of x (A, P, P, P) with w (B, A, k, k, k) -> (B, O, O, O)."""
    k = w.shape[2]
    windows = sliding_window_view(x, (k, k, k), axis=(1, 2, 3))
    windows = windows[:, ::stride, ::stride, ::stride]
    return np.tensordot(w, windows, axes=([1, 2, 3, 4], [0, 4, 5, 6]))


def scatter3d(u: np.ndarray, w: np.ndarray, stride: int, out_dim: int) -> np.ndarray:
    """Adjoint of corr3d: scatter u (B, O, O, O) through w (B, A, k, k, k) into (A, P, P, P)."""
    _, a_ch, k = w.shape[0], w.shape[1], w.shape[2]
    o = u.shape[1]
    out = np.zeros((a_ch, out_dim, out_dim, out_dim), dtype=np.float64)
    for kx, ky, kz in product(range(k), range(k), range(k)):
        contrib = np.tensordot(w[:, :, kx, ky, kz], u, axes=([0], [0]))
        out[
            :,
            kx : kx + stride * o : stride,
            ky : ky + stride * o : stride,
            kz : kz + stride * o : stride,
        ] += contrib
    return out


def wgrad3d(u: np.ndarray, x: np.ndarray, ksize: int, stride: int) -> np.ndarray:
    """Weight gradient: contract u (B, O, O, O) against x (A, P, P, P) -> (B, A, k, k, k)."""
    b_ch, a_ch = u.shape[0], x.shape[0]
    o = u.shape[1]
    dw = np.empty((b_ch, a_ch, ksize, ksize, ksize), dtype=np.float64)
    for kx, ky, kz in product(range(ksize), range(ksize), range(ksize)):
        xs = x[
            :,
            kx : kx + stride * o : stride,
            ky : ky + stride * o : stride,
            kz : kz + stride * o : stride,
        ]
        dw[:, :, kx, ky, kz] = np.tensordot(u, xs, axes=([1, 2, 3], [1, 2, 3]))
    return dw
