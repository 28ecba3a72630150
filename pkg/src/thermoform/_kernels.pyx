# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops for repeated sparse transfer-operator application."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def power_steps(const int[:] indptr, const int[:] indices, const double[:] data,
                double[:] v, int n_steps, acc=None):
    """Run ``n_steps`` of normalised power iteration ``v <- A v / sum(A v)`` in place.

    ``v`` must be non-negative with unit sum. When ``acc`` is given, each new
    iterate is added into it (Cesaro accumulation). Returns the growth ratios.
    """
    cdef Py_ssize_t n = v.shape[0]
    cdef Py_ssize_t i, p, step
    cdef double s, t
    cdef double[:] w = np.empty(n)
    cdef double[:] a
    cdef bint use_acc = acc is not None
    ratios = np.empty(n_steps)
    cdef double[:] r = ratios
    if use_acc:
        a = acc
    with nogil:
        for step in range(n_steps):
            s = 0.0
            for i in range(n):
                t = 0.0
                for p in range(indptr[i], indptr[i + 1]):
                    t = t + data[p] * v[indices[p]]
                w[i] = t
                s = s + t
            r[step] = s
            if s <= 0.0:
                break
            for i in range(n):
                v[i] = w[i] / s
            if use_acc:
                for i in range(n):
                    a[i] = a[i] + v[i]
    return ratios


def sup_min_iterate(const int[:] indptr, const int[:] indices, const double[:] data,
                    double[:, ::1] X, double inv_gamma, int n_steps):
    """For each row ``x`` of ``X``: min over ``1 <= n <= n_steps`` of ``max(A^n x) * inv_gamma^n``.

    ``X`` is overwritten with the last iterate. Returns ``(best, best_step)``.
    """
    cdef Py_ssize_t m = X.shape[0]
    cdef Py_ssize_t n = X.shape[1]
    cdef Py_ssize_t row, i, p, step, j
    cdef double c
    # node-major copies so each matrix entry updates a contiguous batch
    cdef double[:, ::1] Y = np.ascontiguousarray(np.asarray(X).T)
    cdef double[:, ::1] W = np.empty((n, m))
    cdef double[:, ::1] tmp
    cdef double[:] top = np.empty(m)
    best_arr = np.full(m, np.inf)
    step_arr = np.zeros(m, dtype=np.int64)
    cdef double[:] best = best_arr
    cdef long long[:] best_step = step_arr
    with nogil:
        for step in range(1, n_steps + 1):
            for row in range(m):
                top[row] = -1.0e300
            for i in range(n):
                for row in range(m):
                    W[i, row] = 0.0
                for p in range(indptr[i], indptr[i + 1]):
                    c = data[p] * inv_gamma
                    j = indices[p]
                    for row in range(m):
                        W[i, row] += c * Y[j, row]
                for row in range(m):
                    if W[i, row] > top[row]:
                        top[row] = W[i, row]
            for row in range(m):
                if top[row] < best[row]:
                    best[row] = top[row]
                    best_step[row] = step
            tmp = Y
            Y = W
            W = tmp
    np.asarray(X)[:] = np.asarray(Y).T
    return best_arr, step_arr
