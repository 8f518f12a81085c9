# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for sparse propagation and per-edge distances.

Every routine walks rows (or edges) in a fixed order, so results do not
depend on the thread count: a row is always reduced by one thread.
"""
import numpy as np

cimport cython
from libc.stdint cimport int64_t
from cython.parallel cimport prange


def spmm(const int64_t[::1] indptr, const int64_t[::1] indices, const double[::1] data,
         const double[:, ::1] x, Py_ssize_t n_rows, int num_threads=0):
    """Return ``A @ x`` for the CSR matrix ``A`` given by its three arrays."""
    cdef Py_ssize_t k = x.shape[1]
    out_arr = np.zeros((n_rows, k), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, jj, j, c
    cdef double a
    if num_threads > 1:
        for i in prange(n_rows, nogil=True, schedule="static", num_threads=num_threads):
            for jj in range(indptr[i], indptr[i + 1]):
                j = indices[jj]
                a = data[jj]
                for c in range(k):
                    out[i, c] += a * x[j, c]
    else:
        with nogil:
            for i in range(n_rows):
                for jj in range(indptr[i], indptr[i + 1]):
                    j = indices[jj]
                    a = data[jj]
                    for c in range(k):
                        out[i, c] += a * x[j, c]
    return out_arr


def edge_l1(const double[:, ::1] z, const int64_t[::1] src, const int64_t[::1] dst,
            int num_threads=0):
    """Mean absolute difference between the endpoint rows of every edge."""
    cdef Py_ssize_t n_edges = src.shape[0]
    cdef Py_ssize_t dim = z.shape[1]
    out_arr = np.zeros(n_edges, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t e, c, u, v
    cdef double acc, diff
    if dim == 0:
        return out_arr
    if num_threads > 1:
        for e in prange(n_edges, nogil=True, schedule="static", num_threads=num_threads):
            u = src[e]
            v = dst[e]
            acc = 0.0
            for c in range(dim):
                diff = z[u, c] - z[v, c]
                if diff < 0:
                    diff = -diff
                acc = acc + diff
            out[e] = acc / dim
    else:
        with nogil:
            for e in range(n_edges):
                u = src[e]
                v = dst[e]
                acc = 0.0
                for c in range(dim):
                    diff = z[u, c] - z[v, c]
                    if diff < 0:
                        diff = -diff
                    acc = acc + diff
                out[e] = acc / dim
    return out_arr


def edge_l1_backward(const double[:, ::1] z, const int64_t[::1] src, const int64_t[::1] dst,
                     const double[::1] coef):
    """Scatter ``coef[e] * d h_e / d z`` into an array shaped like ``z``.

    The sign of a zero difference is taken as 0. Serial: the scatter
    writes to both endpoints, so edge order fixes the summation order.
    """
    cdef Py_ssize_t n_edges = src.shape[0]
    cdef Py_ssize_t dim = z.shape[1]
    grad_arr = np.zeros((z.shape[0], dim), dtype=np.float64)
    cdef double[:, ::1] grad = grad_arr
    cdef Py_ssize_t e, c, u, v
    cdef double diff, w
    if dim == 0:
        return grad_arr
    with nogil:
        for e in range(n_edges):
            u = src[e]
            v = dst[e]
            w = coef[e] / dim
            for c in range(dim):
                diff = z[u, c] - z[v, c]
                if diff > 0:
                    grad[u, c] += w
                    grad[v, c] -= w
                elif diff < 0:
                    grad[u, c] -= w
                    grad[v, c] += w
    return grad_arr
