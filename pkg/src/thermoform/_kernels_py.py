"""Pure numpy/scipy versions of the compiled kernels (same signatures)."""
import numpy as np
import scipy.sparse as sp


def _csr(indptr, indices, data, n_cols):
    n = len(indptr) - 1
    return sp.csr_matrix((data, indices, indptr), shape=(n, n_cols))


def power_steps(indptr, indices, data, v, n_steps, acc=None):
    A = _csr(indptr, indices, data, len(v))
    ratios = np.empty(n_steps)
    for step in range(n_steps):
        w = A @ v
        s = w.sum()
        ratios[step] = s
        if s <= 0.0:
            break
        v[:] = w / s
        if acc is not None:
            acc += v
    return ratios


def sup_min_iterate(indptr, indices, data, X, inv_gamma, n_steps):
    A = _csr(indptr, indices, data, X.shape[1])
    best = np.full(X.shape[0], np.inf)
    best_step = np.zeros(X.shape[0], dtype=np.int64)
    Y = np.ascontiguousarray(X.T)
    for step in range(1, n_steps + 1):
        Y = (A @ Y) * inv_gamma
        top = Y.max(axis=0)
        better = top < best
        best[better] = top[better]
        best_step[better] = step
    X[:] = Y.T
    return best, best_step
