import os
import subprocess
import sys

import numpy as np
import pytest
import scipy.sparse as sp

from thermoform import _kernels_py, kernels
from thermoform.builtins import builtin_map
from thermoform.transfer import build_collocation, build_ulam

compiled = pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled extension not built")


def _random_matrix(rng, n, density=0.05):
    return sp.random(n, n, density=density, random_state=rng, format="csr") + sp.eye(n, format="csr")


@pytest.mark.parametrize("impl", [None, _kernels_py])
def test_power_steps_matches_dense(impl):
    rng = np.random.default_rng(0)
    A = _random_matrix(rng, 60)
    v = np.full(60, 1 / 60)
    ref = v.copy()
    ratios = kernels.power_steps(A, v, 25, impl=impl)
    dense = A.toarray()
    for k in range(25):
        w = dense @ ref
        assert ratios[k] == pytest.approx(w.sum(), rel=1e-13)
        ref = w / w.sum()
    np.testing.assert_allclose(v, ref, rtol=1e-12)


@compiled
def test_power_steps_backends_agree():
    A = build_ulam(builtin_map("example22"), 0.5, 512).matrix
    v1 = np.full(512, 1 / 512)
    v2 = v1.copy()
    acc1, acc2 = np.zeros(512), np.zeros(512)
    r1 = kernels.power_steps(A, v1, 300, acc1)
    r2 = kernels.power_steps(A, v2, 300, acc2, impl=_kernels_py)
    np.testing.assert_allclose(r1, r2, rtol=1e-12)
    np.testing.assert_allclose(v1, v2, rtol=1e-10, atol=1e-15)
    np.testing.assert_allclose(acc1, acc2, rtol=1e-10, atol=1e-14)


@compiled
def test_sup_min_backends_agree():
    A = build_collocation(builtin_map("example24"), 0.7, 256).matrix
    rng = np.random.default_rng(1)
    X = rng.uniform(size=(9, 257))
    b1, s1 = kernels.sup_min_iterate(A, X.copy(), 0.8, 40)
    b2, s2 = kernels.sup_min_iterate(A, X.copy(), 0.8, 40, impl=_kernels_py)
    np.testing.assert_allclose(b1, b2, rtol=1e-12)
    np.testing.assert_array_equal(s1, s2)


def test_sup_min_against_dense_loop():
    rng = np.random.default_rng(2)
    A = _random_matrix(rng, 40, 0.1)
    X = rng.uniform(size=(3, 40))
    best, _ = kernels.sup_min_iterate(A, X.copy(), 0.5, 12)
    dense = A.toarray()
    for i in range(3):
        y, ref = X[i], np.inf
        for _ in range(12):
            y = 0.5 * dense @ y
            ref = min(ref, y.max())
        assert best[i] == pytest.approx(ref, rel=1e-13)


def test_pure_python_switch():
    env = dict(os.environ, THERMOFORM_PURE_PYTHON="1")
    code = ("from thermoform import kernels, thermo; from thermoform.builtins import builtin_map;"
            "print(kernels.BACKEND, thermo.pressure(builtin_map('doubling'), 0.5, 256))")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True).stdout.split()
    assert out[0] == "python"
    assert float(out[1]) == pytest.approx(0.5 * np.log(2), abs=1e-12)
