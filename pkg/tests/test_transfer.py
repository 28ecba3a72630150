import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from thermoform import transfer as tr
from thermoform.builtins import builtin_map
from thermoform.map_model import map_from_dict

EX22 = builtin_map("example22")
EX24 = builtin_map("example24")
DBL = builtin_map("doubling")


def _nodes(n):
    return np.arange(n + 1) / n


def _cone(rng, n, size):
    return [tr.random_cone_function(rng, n) for _ in range(size)]


# ---------------------------------------------------------------------------
# grid functions and variation

def test_gridfunction_layouts():
    f = tr.GridFunction.from_callable(lambda x: x, 8)
    assert f.values.shape == (9,) and f(0.3) == pytest.approx(0.3)
    c = tr.GridFunction.from_callable(lambda x: x, 8, layout="cells")
    assert c.values.shape == (8,) and c(0.3) == pytest.approx(0.3125)
    with pytest.raises(ValueError):
        tr.GridFunction(np.ones(5), 8)
    with pytest.raises(ValueError):
        tr.GridFunction(np.array([0.0, np.nan]), 1)


def test_bv_examples():
    assert tr.bv_variation(tr.GridFunction.constant(1.0, 64)) == 0.0
    step = tr.GridFunction.from_callable(lambda x: (x <= 0.5) * 1.0, 64)
    assert tr.bv_variation(step) == 1.0
    dec = tr.GridFunction.from_callable(lambda x: np.cos(x), 64)
    assert tr.bv_variation(dec) == pytest.approx(1.0 - np.cos(1.0), abs=1e-15)


# ---------------------------------------------------------------------------
# apply_transfer

def test_frobenius_perron_example22():
    out = tr.apply_transfer(EX22, 1.0, tr.GridFunction.constant(1.0, 4096))
    assert np.max(np.abs(out.values - 1.0)) <= 1e-10


@pytest.mark.parametrize("s", [0.3, 1.0, 2.2])
def test_doubling_constant(s):
    out = tr.apply_transfer(DBL, s, tr.GridFunction.constant(1.0, 256))
    np.testing.assert_allclose(out.values, 2 ** (1 - s), rtol=1e-15)


def test_cone_preserved_example22():
    rng = np.random.default_rng(3)
    for f in _cone(rng, 1024, 50):
        out = tr.apply_transfer(EX22, 0.5, f)
        assert np.all(np.diff(out.values) <= 1e-10)
        assert np.all(out.values >= 0)


# ---------------------------------------------------------------------------
# Ulam matrix

def test_ulam_doubling_n4():
    L = tr.build_ulam(DBL, 1.0, 4).matrix.toarray()
    expected = np.array([[0.5, 0, 0.5, 0], [0.5, 0, 0.5, 0], [0, 0.5, 0, 0.5], [0, 0.5, 0, 0.5]])
    np.testing.assert_allclose(L, expected, atol=1e-15)


@pytest.mark.parametrize("T,tol", [(EX22, 1e-8), (EX24, 1e-6)])
def test_ulam_row_sums_at_s1(T, tol):
    L = tr.build_ulam(T, 1.0, 1024)
    assert L.matrix.min() >= 0
    assert np.max(np.abs(L.row_sums() - 1.0)) <= tol


@pytest.mark.parametrize("s", [0.4, 1.3])
def test_ulam_row_sums_doubling(s):
    L = tr.build_ulam(DBL, s, 64)
    np.testing.assert_allclose(L.row_sums(), 2 * 2.0 ** -s, rtol=1e-14)


@pytest.mark.parametrize("T", [EX22, EX24], ids=["example22", "example24"])
def test_ulam_entries_against_quad(T):
    # independent oracle: scipy quad of the cell average of sum_k psi_k'^s 1_{I_i}(psi_k)
    n, s = 64, 0.5
    L = tr.build_ulam(T, s, n).matrix.toarray()
    h = 1.0 / n
    for j in (0, 17, 40, 63):
        row = np.zeros(n)
        for k in range(1, T.n_branches + 1):
            b = T.branches[k - 1]
            lo, hi = max(j * h, b.image_lo), min((j + 1) * h, b.image_hi)
            if hi <= lo:
                continue
            cuts = np.unique(np.concatenate([[lo, hi], b.forward(np.arange(n + 1) * h)]))
            cuts = cuts[(cuts >= lo) & (cuts <= hi)]
            for a, c in zip(cuts[:-1], cuts[1:]):
                i = min(int(T.psi(k, 0.5 * (a + c)) * n), n - 1)
                val = quad(lambda x: T.dpsi(k, np.array([x]))[0] ** s, a, c,
                           epsabs=1e-13, limit=200)[0]
                row[i] += val / h
        np.testing.assert_allclose(L[j], row, atol=1e-9)


# ---------------------------------------------------------------------------
# spectra

def test_doubling_gamma():
    r = tr.leading_spectrum(tr.build_ulam(DBL, 0.7, 1024))
    assert r.gamma == pytest.approx(2 ** 0.3, abs=1e-9)
    assert r.converged and r.peripheral_count == 1


def test_example22_s1_lebesgue():
    r = tr.leading_spectrum(tr.build_ulam(EX22, 1.0, 8192))
    n = 8192
    assert abs(r.gamma - 1.0) <= 5e-3
    assert np.sum(np.abs(r.density.values - 1.0)) / n < 0.02
    assert 0.5 * np.sum(np.abs(r.ms_weights - 1.0 / n)) < 0.02
    assert not r.ms_near_atomic


@pytest.mark.parametrize("T,s", [(EX22, 0.5), (EX24, 0.5), (EX22, 1.0), (EX24, 1.0)])
def test_gamma_between_endpoint_values(T, s):
    r = tr.leading_spectrum(tr.build_ulam(T, s, 1024), peripheral=False)
    F1 = tr.apply_transfer(T, s, tr.GridFunction.constant(1.0, 1024)).values
    assert F1[-1] - 1e-8 <= r.gamma <= F1[0] + 1e-8
    assert r.residual_left <= 1e-9 and r.residual_right <= 1e-9


def test_period_two_peripheral_count():
    # a doubly stochastic 2-periodic block: eigenvalues +1 and -1 on the unit circle
    import scipy.sparse as sp
    A = sp.csr_matrix(np.array([[0, 0.5, 0, 0.5], [0.5, 0, 0.5, 0], [0, 0.5, 0, 0.5], [0.5, 0, 0.5, 0]]))
    op = tr.TransferOperator(A, 1.0, 4, "cells", DBL)
    r = tr.leading_spectrum(op, beta=0.5)
    assert r.gamma == pytest.approx(1.0)
    assert r.peripheral_count == 2


def test_cesaro_averaging_on_periodic_operator():
    # two 2-cycles with unequal weights: normalised iterates alternate forever
    import scipy.sparse as sp
    A = sp.csr_matrix(np.array([[0, 2.0, 0, 0], [0.5, 0, 0, 0], [0, 0, 0, 2.0], [0, 0, 0.5, 0]]))
    op = tr.TransferOperator(A, 1.0, 4, "cells", DBL)
    r = tr.leading_spectrum(op, beta=1.0)
    assert r.cesaro and r.converged
    assert r.gamma == pytest.approx(1.0, abs=1e-12)
    g = r.density.values
    np.testing.assert_allclose(A @ g, g, atol=1e-10)
    np.testing.assert_allclose(r.ms_weights @ A.toarray(), r.ms_weights, atol=1e-10)
    assert r.peripheral_count == 4


def test_collocation_matches_ulam():
    for T in (EX22, EX24, DBL):
        for s in (0.5, 1.0):
            g_c = tr.collocation_spectrum(T, s, 4096).gamma
            g_u = tr.leading_spectrum(tr.build_ulam(T, s, 4096), peripheral=False).gamma
            assert abs(g_c - g_u) <= 5e-3


def test_conformality_residual():
    L = tr.build_ulam(EX22, 0.5, 1024)
    r = tr.leading_spectrum(L, peripheral=False)
    rng = np.random.default_rng(7)
    for _ in range(50):
        f = rng.normal(size=1024)
        lhs = r.ms_weights @ L.apply(f)
        assert abs(lhs - r.gamma * (r.ms_weights @ f)) <= 1e-6 * np.abs(f).max()


def test_markov_operator_properties():
    n, s = 1024, 0.5
    spec = tr.collocation_spectrum(EX22, s, n)
    C = tr.build_collocation(EX22, s, n)
    w = spec.ms_weights
    rng = np.random.default_rng(11)
    for _ in range(50):
        f = rng.normal(size=n + 1)
        Ff = C.apply(f) / spec.gamma
        assert abs(w @ Ff - w @ f) <= 1e-8 * max(1.0, np.abs(f).max())
        assert w @ np.abs(Ff) <= w @ np.abs(f) + 1e-8


def test_sup_bound_by_variation_plus_l1():
    n = 1024
    w = tr.collocation_spectrum(EX22, 0.5, n).ms_weights
    rng = np.random.default_rng(5)
    for _ in range(50):
        f = tr.GridFunction(np.cumsum(rng.normal(size=n + 1)) * 0.1, n)
        bound = tr.bv_variation(f) + tr.l1_norm(f, w)
        assert np.abs(f.values).max() <= bound + 1e-12


@settings(max_examples=12, deadline=None, derandomize=True)
@given(M=st.integers(2, 5), s=st.floats(0.2, 2.5))
def test_linear_full_branch_oracle(M, s):
    bps = [f"{k}/{M}" for k in range(M + 1)]
    branches = [{"expr": f"{M}*x - {k}", "inverse_expr": f"(x + {k})/{M}"} for k in range(M)]
    T = map_from_dict({"name": f"linear{M}", "breakpoints": bps, "branches": branches})
    n = 64 * M
    r = tr.leading_spectrum(tr.build_ulam(T, s, n), peripheral=False, beta=1.0)
    assert r.gamma == pytest.approx(M ** (1 - s), abs=1e-9)
    np.testing.assert_allclose(r.density.values, 1.0, atol=1e-9)
    np.testing.assert_allclose(r.ms_weights, 1.0 / n, atol=1e-9)


# ---------------------------------------------------------------------------
# densities

def test_invariant_density_examples():
    g = tr.invariant_density(EX22, 1.0, 1024)
    assert np.mean(np.abs(g.values - 1.0)) < 0.02
    assert g.meta["in_cone"]
    g = tr.invariant_density(EX24, 1.0, 1024)
    assert np.mean(np.abs(g.values - 1.0)) < 0.05
    g = tr.invariant_density(DBL, 0.6, 256)
    np.testing.assert_allclose(g.values, 1.0, atol=1e-12)


def test_density_normalised_against_weights():
    spec = tr.collocation_spectrum(EX22, 0.5, 1024)
    g = tr.invariant_density(EX22, 0.5, 1024, gamma=spec.gamma, weights=spec.ms_weights)
    assert tr.integrate(g, spec.ms_weights) == pytest.approx(1.0, abs=1e-8)
    assert np.all(g.values >= 0)


def test_restrict_full_interval_is_identity():
    spec = tr.collocation_spectrum(EX22, 0.5, 1024)
    g = tr.invariant_density(EX22, 0.5, 1024)
    gb = tr.restrict_density_gbeta(g, 1.0, spec.ms_weights)
    np.testing.assert_allclose(gb.values, g.values, rtol=1e-12)


def test_restricted_density_is_invariant():
    n, s, tol = 1024, 0.5, 1e-10
    spec = tr.collocation_spectrum(EX22, s, n)
    g = tr.invariant_density(EX22, s, n, tol=tol)
    gb = tr.restrict_density_gbeta(g, 1.0, spec.ms_weights)
    Fg = tr.build_collocation(EX22, s, n).apply(gb.values) / spec.gamma
    assert np.sum(np.abs(Fg - gb.values) * spec.ms_weights) <= 10 * tol


def test_restrict_normalisation():
    n = 64
    g = tr.GridFunction(np.ones(n), n, "cells")
    gb = tr.restrict_density_gbeta(g, 0.5, np.full(n, 1.0 / n))
    np.testing.assert_allclose(gb.values[: n // 2], 2.0)
    np.testing.assert_allclose(gb.values[n // 2:], 0.0)
    with pytest.raises(tr.DensityError):
        tr.restrict_density_gbeta(tr.GridFunction(np.zeros(n), n, "cells"), 0.5, np.full(n, 1 / n))


# ---------------------------------------------------------------------------
# probes

def test_lasota_yorke_doubling():
    r = tr.lasota_yorke_probe(DBL, 1.0, 20)
    assert r.alpha == pytest.approx(0.75)
    assert r.passed and 0 <= r.b_hat < 1e-9


def test_lasota_yorke_example22():
    r = tr.lasota_yorke_probe(EX22, 0.5, 20)
    assert r.passed and np.isfinite(r.b_hat)
    spec = tr.collocation_spectrum(EX22, 0.5, 1024)
    F1 = tr.apply_transfer(EX22, 0.5, tr.GridFunction.constant(1.0, 1024))
    assert r.b_hat >= tr.bv_variation(F1) / spec.gamma - 1e-12


def test_contraction_of_variation_doubling():
    rng = np.random.default_rng(1)
    for f in _cone(rng, 512, 20):
        Ff = tr.apply_transfer(DBL, 1.0, f)
        assert tr.bv_variation(Ff) <= 0.5 * tr.bv_variation(f) + 1e-12


def test_hulse_doubling_geometric():
    gaps = tr.hulse_probe(DBL, 1.0, 8, n=1024)
    g1 = gaps[1]
    np.testing.assert_allclose(g1, 0.5 ** np.arange(1, 9), rtol=1e-12)
    np.testing.assert_allclose(gaps[2], 0.0, atol=1e-15)


def test_hulse_example22_reported():
    gaps = tr.hulse_probe(EX22, 0.5, 20, n=1024)
    assert set(gaps) == {1, 2}
    assert all(np.all(np.isfinite(v)) for v in gaps.values())
