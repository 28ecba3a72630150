"""Kernel dispatch: the compiled extension when it imports, else the numpy fallback.

Set ``THERMOFORM_PURE_PYTHON=1`` to force the fallback.
"""
import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py
if os.environ.get("THERMOFORM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py


def _csr_parts(A):
    A = A.tocsr()
    return (np.ascontiguousarray(A.indptr, dtype=np.int32),
            np.ascontiguousarray(A.indices, dtype=np.int32),
            np.ascontiguousarray(A.data, dtype=np.float64))


def power_steps(A, v, n_steps, acc=None, impl=None):
    """Normalised power iteration on sparse ``A``; ``v`` (unit sum) is updated in place."""
    impl = impl or _impl
    return impl.power_steps(*_csr_parts(A), v, int(n_steps), acc)


def sup_min_iterate(A, X, inv_gamma, n_steps, impl=None):
    """Row-wise min over steps of the sup of ``(inv_gamma * A)^n x``; ``X`` is consumed."""
    impl = impl or _impl
    X = np.ascontiguousarray(X, dtype=np.float64)
    return impl.sup_min_iterate(*_csr_parts(A), X, float(inv_gamma), int(n_steps))
