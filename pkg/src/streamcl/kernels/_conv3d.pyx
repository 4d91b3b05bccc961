# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled strided 3D convolution primitives.

Semantics match streamcl.kernels.numpy_backend exactly (same contractions,
same argument order); only the summation order differs, so results agree
with the NumPy backend to float64 rounding, not bit-for-bit.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"


def corr3d(double[:, :, :, ::1] x, double[:, :, :, :, ::1] w, int stride):
    cdef Py_ssize_t B = w.shape[0], A = w.shape[1], K = w.shape[2]
    cdef Py_ssize_t P = x.shape[1]
    cdef Py_ssize_t O = (P - K) // stride + 1
    y_arr = np.zeros((B, O, O, O), dtype=np.float64)
    cdef double[:, :, :, ::1] y = y_arr
    cdef Py_ssize_t b, a, kx, ky, kz, i, j, l
    cdef double acc
    # one pass per input slab, K^3 register accumulation per voxel: keeps
    # x reads inside a single (a) slab and avoids K^3 output sweeps
    with nogil:
        for b in range(B):
            for a in range(A):
                for i in range(O):
                    for j in range(O):
                        for l in range(O):
                            acc = 0.0
                            for kx in range(K):
                                for ky in range(K):
                                    for kz in range(K):
                                        acc += w[b, a, kx, ky, kz] * x[a, i * stride + kx, j * stride + ky, l * stride + kz]
                            y[b, i, j, l] += acc
    return y_arr


def scatter3d(double[:, :, :, ::1] u, double[:, :, :, :, ::1] w, int stride, int out_dim):
    cdef Py_ssize_t B = w.shape[0], A = w.shape[1], K = w.shape[2]
    cdef Py_ssize_t O = u.shape[1]
    out_arr = np.zeros((A, out_dim, out_dim, out_dim), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t b, a, kx, ky, kz, i, j, l
    cdef double wv
    with nogil:
        for b in range(B):
            for a in range(A):
                for kx in range(K):
                    for ky in range(K):
                        for kz in range(K):
                            wv = w[b, a, kx, ky, kz]
                            for i in range(O):
                                for j in range(O):
                                    for l in range(O):
                                        out[a, i * stride + kx, j * stride + ky, l * stride + kz] += wv * u[b, i, j, l]
    return out_arr


def wgrad3d(double[:, :, :, ::1] u, double[:, :, :, ::1] x, int ksize, int stride):
    cdef Py_ssize_t B = u.shape[0], A = x.shape[0], K = ksize
    cdef Py_ssize_t O = u.shape[1]
    dw_arr = np.zeros((B, A, K, K, K), dtype=np.float64)
    cdef double[:, :, :, :, ::1] dw = dw_arr
    cdef Py_ssize_t b, a, kx, ky, kz, i, j, l
    cdef double acc
    with nogil:
        for b in range(B):
            for a in range(A):
                for kx in range(K):
                    for ky in range(K):
                        for kz in range(K):
                            acc = 0.0
                            for i in range(O):
                                for j in range(O):
                                    for l in range(O):
                                        acc += u[b, i, j, l] * x[a, i * stride + kx, j * stride + ky, l * stride + kz]
                            dw[b, a, kx, ky, kz] = acc
    return dw_arr
