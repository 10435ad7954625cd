# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled covariance sweep kernels.

Same contracts as numpy_backend; see that module for the reference
semantics.  The matrix products go through the BLAS handles scipy
exports, so the candidate sweep runs at full zgemm speed while the
per-row reductions and the rank-one update skip every numpy temporary.
All buffers are C-contiguous; BLAS sees them as their column-major
transposes, which the call shapes below account for.
"""

import numpy as np

cimport numpy as cnp
from scipy.linalg.cython_blas cimport zdotc, zdotu, zgemm, zgemv, zgeru

cnp.import_array()


def quadforms(const double complex[:, ::1] sigma, const double complex[:, ::1] rows):
    """Return (q, s) with q_j = Re(r_j sigma r_j^H), s_j = ||r_j sigma||^2."""
    cdef Py_ssize_t m = rows.shape[0]
    cdef Py_ssize_t n = rows.shape[1]
    if sigma.shape[0] != n or sigma.shape[1] != n:
        raise ValueError("sigma and rows dimensions do not match")

    q_arr = np.empty(m, dtype=np.float64)
    s_arr = np.empty(m, dtype=np.float64)
    w_arr = np.empty((m, n), dtype=np.complex128)
    cdef double[::1] q = q_arr
    cdef double[::1] s = s_arr
    cdef double complex[:, ::1] w = w_arr

    cdef int ni = <int> n
    cdef int mi = <int> m
    cdef int one = 1
    cdef double complex z_one = 1.0
    cdef double complex z_zero = 0.0
    cdef double complex acc
    cdef Py_ssize_t j

    if m == 0 or n == 0:
        return q_arr, s_arr

    with nogil:
        # row-major W = R S is column-major W^T = S^T R^T
        zgemm("N", "N", &ni, &mi, &ni, &z_one,
              <double complex*> &sigma[0, 0], &ni,
              <double complex*> &rows[0, 0], &ni,
              &z_zero, &w[0, 0], &ni)
        for j in range(m):
            acc = zdotc(&ni, <double complex*> &rows[j, 0], &one, &w[j, 0], &one)
            q[j] = acc.real
            acc = zdotc(&ni, &w[j, 0], &one, &w[j, 0], &one)
            s[j] = acc.real
    return q_arr, s_arr


def rank_one_downdate(double complex[:, ::1] sigma, const double complex[::1] row, double precision):
    """In-place covariance downdate for one precision-weighted row; returns q."""
    cdef Py_ssize_t n = sigma.shape[0]
    if row.shape[0] != n:
        raise ValueError("sigma and row dimensions do not match")

    u_arr = np.empty(n, dtype=np.complex128)
    cu_arr = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] u = u_arr
    cdef double complex[::1] cu = cu_arr

    cdef int ni = <int> n
    cdef int one = 1
    cdef double complex z_one = 1.0
    cdef double complex z_zero = 0.0
    cdef double complex acc
    cdef double complex nscale
    cdef double q = 0.0
    cdef Py_ssize_t i

    if n == 0:
        return q

    with nogil:
        for i in range(n):
            cu[i] = row[i].conjugate()
        # u = sigma conj(row); the buffer is sigma^T to BLAS, so take A^T x
        zgemv("T", &ni, &ni, &z_one, <double complex*> &sigma[0, 0], &ni,
              &cu[0], &one, &z_zero, &u[0], &one)
        acc = zdotu(&ni, <double complex*> &row[0], &one, &u[0], &one)
        q = acc.real
        nscale = -precision / (1.0 + precision * q)
        for i in range(n):
            cu[i] = u[i].conjugate()
        # row-major sigma += nscale u u^H is buffer += nscale conj(u) u^T
        zgeru(&ni, &ni, &nscale, &cu[0], &one, &u[0], &one,
              <double complex*> &sigma[0, 0], &ni)
    return q
