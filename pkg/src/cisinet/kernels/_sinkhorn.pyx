# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled lane of the entropic optimal-transport kernel.

Mirrors ``_sinkhorn_np`` operation for operation: log-domain scaling
iterations forward, exact reverse replay backward.  The loops run over small
per-pattern point sets thousands of times per training run, which is why
this lane exists.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log

cnp.import_array()


cdef void _cost_matrix(double[:, ::1] a, double[:, ::1] b, double[:, ::1] c) noexcept:
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0], p = a.shape[1]
    cdef Py_ssize_t i, j, d
    cdef double acc, diff
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for d in range(p):
                diff = a[i, d] - b[j, d]
                acc += diff * diff
            c[i, j] = acc


def sinkhorn_forward(object a_in, object b_in, double eps, int iters):
    """Run ``iters`` scaling iterations; return (cost, u_hist, v_hist)."""
    cdef double[:, ::1] a = np.ascontiguousarray(a_in, dtype=np.float64)
    cdef double[:, ::1] b = np.ascontiguousarray(b_in, dtype=np.float64)
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0]
    cdef double log_mu = -log(<double> n)
    cdef double log_nu = -log(<double> m)

    c_arr = np.empty((n, m))
    cdef double[:, ::1] c = c_arr
    _cost_matrix(a, b, c)
    mat_arr = np.empty((n, m))
    cdef double[:, ::1] mat = mat_arr
    cdef Py_ssize_t i, j, s
    for i in range(n):
        for j in range(m):
            mat[i, j] = -c[i, j] / eps

    u_hist_arr = np.zeros((iters + 1, n))
    v_hist_arr = np.zeros((iters + 1, m))
    cdef double[:, ::1] u_hist = u_hist_arr
    cdef double[:, ::1] v_hist = v_hist_arr
    u_arr = np.zeros(n)
    v_arr = np.zeros(m)
    cdef double[::1] u = u_arr
    cdef double[::1] v = v_arr
    cdef double mx, acc, val

    for s in range(1, iters + 1):
        for i in range(n):
            mx = mat[i, 0] + v[0]
            for j in range(1, m):
                val = mat[i, j] + v[j]
                if val > mx:
                    mx = val
            acc = 0.0
            for j in range(m):
                acc += exp(mat[i, j] + v[j] - mx)
            u[i] = log_mu - (mx + log(acc))
        for j in range(m):
            mx = mat[0, j] + u[0]
            for i in range(1, n):
                val = mat[i, j] + u[i]
                if val > mx:
                    mx = val
            acc = 0.0
            for i in range(n):
                acc += exp(mat[i, j] + u[i] - mx)
            v[j] = log_nu - (mx + log(acc))
        for i in range(n):
            u_hist[s, i] = u[i]
        for j in range(m):
            v_hist[s, j] = v[j]

    cdef double cost = 0.0
    for i in range(n):
        for j in range(m):
            cost += exp(mat[i, j] + u[i] + v[j]) * c[i, j]
    return cost, u_hist_arr, v_hist_arr


def sinkhorn_backward(object a_in, object b_in, double eps,
                      object u_hist_in, object v_hist_in, double gbar):
    """Gradient of ``gbar * cost`` w.r.t. the two point sets."""
    cdef double[:, ::1] a = np.ascontiguousarray(a_in, dtype=np.float64)
    cdef double[:, ::1] b = np.ascontiguousarray(b_in, dtype=np.float64)
    cdef double[:, ::1] u_hist = np.ascontiguousarray(u_hist_in, dtype=np.float64)
    cdef double[:, ::1] v_hist = np.ascontiguousarray(v_hist_in, dtype=np.float64)
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0], p = a.shape[1]
    cdef Py_ssize_t iters = u_hist.shape[0] - 1
    cdef double log_mu = -log(<double> n)
    cdef double log_nu = -log(<double> m)
    cdef Py_ssize_t i, j, d, s

    c_arr = np.empty((n, m))
    cdef double[:, ::1] c = c_arr
    _cost_matrix(a, b, c)
    mat_arr = np.empty((n, m))
    cdef double[:, ::1] mat = mat_arr
    for i in range(n):
        for j in range(m):
            mat[i, j] = -c[i, j] / eps

    mat_bar_arr = np.empty((n, m))
    c_bar_arr = np.empty((n, m))
    u_bar_arr = np.zeros(n)
    v_bar_arr = np.zeros(m)
    cdef double[:, ::1] mat_bar = mat_bar_arr
    cdef double[:, ::1] c_bar = c_bar_arr
    cdef double[::1] u_bar = u_bar_arr
    cdef double[::1] v_bar = v_bar_arr
    cdef double plan, pc, g, softmax

    for i in range(n):
        for j in range(m):
            plan = exp(mat[i, j] + u_hist[iters, i] + v_hist[iters, j])
            pc = plan * c[i, j]
            mat_bar[i, j] = pc
            c_bar[i, j] = plan
            u_bar[i] += pc
            v_bar[j] += pc

    for s in range(iters, 0, -1):
        # v_s = log_nu - lse_cols(mat + u_s): softmax over columns.
        for j in range(m):
            for i in range(n):
                softmax = exp(mat[i, j] + u_hist[s, i] + v_hist[s, j] - log_nu)
                g = -softmax * v_bar[j]
                mat_bar[i, j] += g
                u_bar[i] += g
        # u_s = log_mu - lse_rows(mat + v_{s-1}): softmax over rows.
        for j in range(m):
            v_bar[j] = 0.0
        for i in range(n):
            for j in range(m):
                softmax = exp(mat[i, j] + v_hist[s - 1, j] + u_hist[s, i] - log_mu)
                g = -softmax * u_bar[i]
                mat_bar[i, j] += g
                v_bar[j] += g
        for i in range(n):
            u_bar[i] = 0.0

    ga_arr = np.zeros((n, p))
    gb_arr = np.zeros((m, p))
    cdef double[:, ::1] ga = ga_arr
    cdef double[:, ::1] gb = gb_arr
    cdef double cb, row_sum, col_sum

    for i in range(n):
        row_sum = 0.0
        for j in range(m):
            cb = c_bar[i, j] - mat_bar[i, j] / eps
            row_sum += cb
            for d in range(p):
                ga[i, d] -= 2.0 * cb * b[j, d]
        for d in range(p):
            ga[i, d] += 2.0 * row_sum * a[i, d]
            ga[i, d] *= gbar
    for j in range(m):
        col_sum = 0.0
        for i in range(n):
            cb = c_bar[i, j] - mat_bar[i, j] / eps
            col_sum += cb
            for d in range(p):
                gb[j, d] -= 2.0 * cb * a[i, d]
        for d in range(p):
            gb[j, d] += 2.0 * col_sum * b[j, d]
            gb[j, d] *= gbar
    return ga_arr, gb_arr
