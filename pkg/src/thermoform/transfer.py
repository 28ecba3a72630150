"""Transfer operator ``F_s f = sum_k (psi_k')^s f o psi_k`` and its discretisations.

Two discretisations are kept side by side:

* nodal collocation (:func:`build_collocation`): values at ``x_j = j/n`` with
  linear interpolation, used to iterate grid functions and by the probes;
* Ulam cell averages (:func:`build_ulam`): ``L[j, i]`` is the mean over cell
  ``I_j`` of ``sum_k (psi_k')^s 1_{I_i} o psi_k``, used for eigen-data.

Each has its own leading eigen-triple from :func:`leading_spectrum`; pairing a
grid function with discrete conformal weights uses the layout of the weights
(``n`` cell weights pair with midpoint values, ``n + 1`` node weights with node
values).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from . import kernels
from .map_model import PiecewiseMap

log = logging.getLogger(__name__)

__all__ = [
    "GridFunction", "TransferOperator", "UlamMatrix", "CollocationMatrix",
    "SpectralResult", "LasotaYorkeResult",
    "apply_transfer", "build_ulam", "build_collocation", "leading_spectrum",
    "collocation_spectrum", "bv_variation", "integrate", "lasota_yorke_probe",
    "invariant_density", "restrict_density_gbeta", "hulse_probe", "DensityError",
    "random_cone_function",
]

QUAD_TOL = 1e-10
MAX_ITER = 200_000


class DensityError(ValueError):
    pass


# ---------------------------------------------------------------------------
# grid functions

@dataclass(eq=False)
class GridFunction:
    """Function on the uniform grid of ``[0, 1]`` with ``n_cells`` cells.

    ``layout="nodes"``: ``n_cells + 1`` values at ``j/n_cells``, linear in between.
    ``layout="cells"``: ``n_cells`` cell values, constant on each cell.
    """

    values: np.ndarray
    n_cells: int
    layout: str = "nodes"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = self.n_cells + 1 if self.layout == "nodes" else self.n_cells
        if self.values.shape != (expected,):
            raise ValueError(f"{self.layout} layout on {self.n_cells} cells needs {expected} values")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid function values must be finite")

    @classmethod
    def from_callable(cls, fn, n_cells: int, layout: str = "nodes") -> "GridFunction":
        pts = nodes(n_cells) if layout == "nodes" else centers(n_cells)
        vals = np.broadcast_to(np.asarray(fn(pts), float), pts.shape)
        return cls(np.array(vals), n_cells, layout)

    @classmethod
    def constant(cls, c: float, n_cells: int, layout: str = "nodes") -> "GridFunction":
        size = n_cells + 1 if layout == "nodes" else n_cells
        return cls(np.full(size, float(c)), n_cells, layout)

    @property
    def points(self) -> np.ndarray:
        return nodes(self.n_cells) if self.layout == "nodes" else centers(self.n_cells)

    def __call__(self, x):
        x = np.asarray(x, float)
        if self.layout == "nodes":
            return np.interp(x, nodes(self.n_cells), self.values)
        idx = np.clip((x * self.n_cells).astype(int), 0, self.n_cells - 1)
        return self.values[idx]

    def midpoint_values(self) -> np.ndarray:
        """Cell values: midpoints of the interpolant (= cell means for linear pieces)."""
        if self.layout == "cells":
            return self.values
        return 0.5 * (self.values[:-1] + self.values[1:])

    def with_values(self, values) -> "GridFunction":
        return GridFunction(values, self.n_cells, self.layout)


def nodes(n: int) -> np.ndarray:
    return np.arange(n + 1) / n


def centers(n: int) -> np.ndarray:
    return (np.arange(n) + 0.5) / n


def _paired_values(f: GridFunction, weights: np.ndarray) -> np.ndarray:
    w = np.asarray(weights)
    if len(w) == len(f.values):
        return f.values
    if f.layout == "nodes" and len(w) == f.n_cells:
        return f.midpoint_values()
    raise ValueError(f"cannot pair {len(f.values)} {f.layout} values with {len(w)} weights")


def integrate(f: GridFunction, weights) -> float:
    """``int f dm`` for the discrete measure with the given weights."""
    return float(np.dot(weights, _paired_values(f, weights)))


def l1_norm(f: GridFunction, weights) -> float:
    return float(np.dot(weights, np.abs(_paired_values(f, weights))))


def bv_variation(f: GridFunction) -> float:
    """Total variation of the grid function (exact for the interpolant)."""
    return float(np.sum(np.abs(np.diff(f.values))))


# ---------------------------------------------------------------------------
# operators

@dataclass(eq=False)
class TransferOperator:
    matrix: sp.csr_matrix
    s: float
    n: int
    layout: str
    T: PiecewiseMap = field(repr=False)

    def apply(self, values: np.ndarray) -> np.ndarray:
        return self.matrix @ values

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()


@dataclass(eq=False)
class UlamMatrix(TransferOperator):
    flagged: int = 0  # entries that fell back to the midpoint rule


@dataclass(eq=False)
class CollocationMatrix(TransferOperator):
    pass


@lru_cache(maxsize=32)
def build_collocation(T: PiecewiseMap, s: float, n: int) -> CollocationMatrix:
    """Nodal matrix ``C`` with ``(C f)_j = sum_k psi_k'(x_j)^s f~(psi_k(x_j))``."""
    if s <= 0:
        raise ValueError("s must be positive")
    x = nodes(n)
    rows, cols, vals = [], [], []
    for k in range(1, T.n_branches + 1):
        d = T.dpsi(k, x)
        live = d > 0
        if not np.any(live):
            continue
        j = np.nonzero(live)[0]
        y = T.psi(k, x[live]) * n
        i = np.clip(np.floor(y).astype(int), 0, n - 1)
        t = np.clip(y - i, 0.0, 1.0)
        wgt = d[live] ** s
        rows += [j, j]
        cols += [i, i + 1]
        vals += [wgt * (1.0 - t), wgt * t]
    C = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n + 1, n + 1)).tocsr()
    C.eliminate_zeros()
    return CollocationMatrix(C, float(s), n, "nodes", T)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)


def _gl(fn, a, b):
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    pts = mid[:, None] + half[:, None] * _GL_X[None, :]
    return half * (fn(pts.ravel()).reshape(pts.shape) @ _GL_W)


def _adaptive_gl(fn, a, b, tol, max_depth=40):
    """Integrate ``fn`` over each ``[a_i, b_i]`` adaptively; returns (values, flagged-mask)."""
    out = np.zeros(len(a))
    flagged = np.zeros(len(a), dtype=bool)
    owner = np.arange(len(a))
    whole = _gl(fn, a, b)
    for depth in range(max_depth):
        if len(a) == 0:
            break
        m = 0.5 * (a + b)
        left, right = _gl(fn, a, m), _gl(fn, m, b)
        halves = left + right
        ok = np.abs(halves - whole) <= tol * np.maximum(1.0, 2.0 ** -depth)
        np.add.at(out, owner[ok], halves[ok])
        bad = ~ok
        a, b, owner = np.concatenate([a[bad], m[bad]]), np.concatenate([m[bad], b[bad]]), \
            np.concatenate([owner[bad], owner[bad]])
        whole = np.concatenate([left[bad], right[bad]])
    if len(a):
        # midpoint rule with 2^10 panels on whatever is left
        k = 1024
        t = (np.arange(k) + 0.5) / k
        pts = a[:, None] + (b - a)[:, None] * t[None, :]
        vals = fn(pts.ravel()).reshape(pts.shape).mean(axis=1) * (b - a)
        np.add.at(out, owner, vals)
        flagged[owner] = True
    return out, flagged


@lru_cache(maxsize=32)
def build_ulam(T: PiecewiseMap, s: float, n: int, tol: float = QUAD_TOL) -> UlamMatrix:
    """Ulam matrix: cell averages of ``F_s`` applied to cell indicators.

    Each entry is assembled from the sub-intervals of ``I_j`` on which
    ``psi_k`` lands in ``I_i``; their ends are images of cell edges under
    ``T_k``, so no inversion is needed for the bookkeeping.
    """
    if s <= 0:
        raise ValueError("s must be positive")
    if n < 2:
        raise ValueError("need at least two cells")
    h = 1.0 / n
    grid = nodes(n)
    jumps = np.unique([v for b in T.branches for v in (b.image_lo, b.image_hi)])
    rows, cols, vals, flags = [], [], [], 0
    for k, b in enumerate(T.branches, start=1):
        inner = grid[(grid > b.lo) & (grid < b.hi)]
        dest_edges = np.concatenate([[b.lo], inner, [b.hi]])
        y_edges = b.forward(dest_edges[:-1])
        y_edges = np.concatenate([[b.image_lo], y_edges[1:], [b.image_hi]])
        lo, hi = b.image_lo, b.image_hi
        pts = np.concatenate([y_edges, grid[(grid > lo) & (grid < hi)],
                              jumps[(jumps > lo) & (jumps < hi)]])
        pts = np.unique(np.clip(pts, lo, hi))
        a, c = pts[:-1], pts[1:]
        keep = c - a > 1e-15
        a, c = a[keep], c[keep]
        if len(a) == 0:
            continue
        mid = 0.5 * (a + c)
        row = np.clip(np.floor(mid * n).astype(int), 0, n - 1)
        col = np.clip(np.floor(b.inverse(mid) * n).astype(int), 0, n - 1)

        def integrand(x, b=b):
            return np.maximum(b.dinverse(x), 0.0) ** s

        ints, flagged = _adaptive_gl(integrand, a, c, tol * h)
        flags += int(flagged.sum())
        rows.append(row)
        cols.append(col)
        vals.append(ints / h)
    L = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsr()
    L.sum_duplicates()
    L.eliminate_zeros()
    if flags:
        log.warning("build_ulam: %d quadrature pieces used the midpoint fallback", flags)
    return UlamMatrix(L, float(s), n, "cells", T, flagged=flags)


def apply_transfer(T: PiecewiseMap, s: float, f: GridFunction) -> GridFunction:
    """``F_s f`` on the grid of ``f`` (collocation for node layout, Ulam for cell layout)."""
    if f.layout == "nodes":
        op = build_collocation(T, float(s), f.n_cells)
    else:
        op = build_ulam(T, float(s), f.n_cells)
    return f.with_values(op.apply(f.values))


# ---------------------------------------------------------------------------
# leading eigen-data

@dataclass(eq=False)
class SpectralResult:
    gamma: float
    ms_weights: np.ndarray
    density: GridFunction
    residual_left: float
    residual_right: float
    peripheral_count: int
    support_estimate: list
    converged: bool = True
    iterations: int = 0
    cesaro: bool = False
    ms_near_atomic: bool = False
    operator: TransferOperator | None = field(default=None, repr=False)

    @property
    def pressure(self) -> float:
        return float(np.log(self.gamma))

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "pressure": self.pressure,
            "residual_left": self.residual_left,
            "residual_right": self.residual_right,
            "peripheral_count": self.peripheral_count,
            "support_estimate": self.support_estimate,
            "converged": self.converged,
            "iterations": self.iterations,
            "cesaro": self.cesaro,
            "ms_near_atomic": self.ms_near_atomic,
            "layout": self.density.layout,
            "n_cells": self.density.n_cells,
        }


def _oscillating(ratios: np.ndarray, tol: float) -> bool:
    d = np.diff(ratios[np.isfinite(ratios)])
    if len(d) < 8:
        return False
    big = np.abs(d) > tol
    flips = np.sum(np.sign(d[1:]) != np.sign(d[:-1]))
    return bool(big.mean() > 0.5 and flips > 0.5 * len(d))


def _perron(A, v0: np.ndarray, tol: float, max_iter: int):
    """Normalised power iteration with automatic Cesaro averaging.

    When the growth ratios oscillate the iteration switches to the averaged
    operator ``(A + c I) / (1 + c)`` with ``c`` the current growth estimate,
    which has the same Perron vector but damps the rest of the peripheral
    spectrum. Returns ``(vector, converged, iterations, cesaro_used)``; the
    vector has unit sum.
    """
    v = np.array(v0, dtype=float)
    v /= v.sum()
    B = A
    it = 0
    chunk = 16
    cesaro = False
    while True:
        w = A @ v
        rho = w.sum()
        if rho > 0 and np.abs(w / rho - v).sum() < tol:
            return v, True, it, cesaro
        if it >= max_iter:
            return v, False, it, cesaro
        steps = min(chunk, max_iter - it)
        ratios = kernels.power_steps(B, v, steps)
        it += steps
        if not cesaro and _oscillating(ratios, tol):
            cesaro = True
            good = ratios[np.isfinite(ratios) & (ratios > 0)]
            c = float(np.exp(np.mean(np.log(good)))) if len(good) else 1.0
            B = (A + c * sp.identity(A.shape[0], format="csr")).tocsr()
        chunk = min(chunk * 2, 4096)


def _peripheral_count(A, gamma: float, tol: float, k: int = 9, n_iter: int = 300, seed: int = 0):
    n = A.shape[0]
    k = min(k, n)
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((n, k)))
    for _ in range(n_iter):
        Q, _ = np.linalg.qr(A @ Q)
    ritz = np.linalg.eigvals(Q.T @ (A @ Q))
    thresh = (1.0 - max(10.0 * tol, 1e-8)) * gamma
    return max(1, int(np.sum(np.abs(ritz) >= thresh)))


def _support(weights: np.ndarray, n: int, layout: str) -> list:
    thresh = (10.0 / n) * np.median(weights)
    on = weights > thresh
    out = []
    start = None
    pts = np.arange(len(weights)) / n
    for i, flag in enumerate(on):
        if flag and start is None:
            start = i
        if not flag and start is not None:
            out.append([float(pts[start]), float(min(1.0, pts[i - 1] + 1.0 / n))])
            start = None
    if start is not None:
        out.append([float(pts[start]), 1.0])
    return out


def leading_spectrum(L: TransferOperator, tol: float = 1e-10, max_iter: int = MAX_ITER,
                     beta: float | None = None, peripheral: bool = True) -> SpectralResult:
    """Leading eigenvalue ``gamma`` with left (conformal) and right (density) vectors."""
    A = L.matrix.tocsr()
    n_vals = A.shape[0]
    ones = np.ones(n_vals)
    g, conv_r, it_r, ces_r = _perron(A, ones, tol, max_iter)
    w, conv_l, it_l, ces_l = _perron(A.T.tocsr(), ones, tol, max_iter)
    gamma = float(w @ (A @ ones) / w.sum())
    res_left = float(np.abs(A.T @ w - gamma * w).sum())
    res_right = float(np.abs(A @ g - gamma * g).sum())
    converged = conv_l and conv_r
    if not converged:
        log.warning("leading_spectrum: no convergence after %d iterations", max_iter)
    density = GridFunction(g / float(w @ g), L.n, L.layout)
    if beta is None:
        from .aconvex import find_beta
        try:
            beta = find_beta(L.T)[0]
        except Exception:  # noqa: BLE001 - only used for the atomic-mass diagnostic
            beta = 1.0
    pts = nodes(L.n) if L.layout == "nodes" else centers(L.n)
    near = np.abs(pts - beta) <= (1.0 / L.n) * (1.0 if L.layout == "cells" else 1.0 + 1e-9)
    atomic = bool(w[near].sum() > 0.99)
    count = _peripheral_count(A, gamma, tol) if peripheral else 1
    return SpectralResult(
        gamma=gamma, ms_weights=w, density=density,
        residual_left=res_left, residual_right=res_right,
        peripheral_count=count, support_estimate=_support(w, L.n, L.layout),
        converged=converged, iterations=max(it_l, it_r), cesaro=ces_l or ces_r,
        ms_near_atomic=atomic, operator=L,
    )


@lru_cache(maxsize=32)
def collocation_spectrum(T: PiecewiseMap, s: float, n: int, tol: float = 1e-12,
                         max_iter: int = MAX_ITER) -> SpectralResult:
    """Leading eigen-data of the nodal operator (cached; used by the grid-function probes)."""
    return leading_spectrum(build_collocation(T, float(s), n), tol, max_iter, peripheral=False)


# ---------------------------------------------------------------------------
# densities

def invariant_density(T: PiecewiseMap, s: float, n: int, tol: float = 1e-10,
                      gamma: float | None = None, max_iter: int = MAX_ITER,
                      weights: np.ndarray | None = None) -> GridFunction:
    """Fixed point of ``F_s / gamma`` on the node grid, iterated from the constant 1.

    Iterates are Cesaro-averaged when they oscillate. The result is normalised
    to unit mass against the nodal conformal weights and tagged in ``meta``
    with ``converged``, ``iterations`` and ``in_cone``.
    """
    op = build_collocation(T, float(s), n)
    if gamma is None or weights is None:
        spec = collocation_spectrum(T, float(s), n)
        gamma = spec.gamma if gamma is None else gamma
        weights = spec.ms_weights if weights is None else weights
    g, conv, it, ces = _perron(op.matrix, np.ones(n + 1), tol, max_iter)
    g = g / float(np.dot(weights, g))
    drift = float(np.abs(op.apply(g) / gamma - g) @ weights)
    in_cone = bool(np.all(np.diff(g) <= 1e-6))
    if not in_cone:
        log.warning("invariant_density: result is not non-increasing")
    out = GridFunction(g, n, "nodes")
    out.meta.update(converged=conv, iterations=it, cesaro=ces, in_cone=in_cone,
                    invariance_residual=drift)
    return out


def restrict_density_gbeta(g: GridFunction, beta: float, ms) -> GridFunction:
    """``g_beta = (g / A) 1_[0, beta]`` with ``A = int_0^beta g dm_s``."""
    pts = g.points
    mask = pts <= beta + 1e-12
    restricted = g.with_values(np.where(mask, g.values, 0.0))
    A = integrate(restricted, ms)
    if A <= 1e-12:
        raise DensityError("density vanishes on [0, beta]")
    return restricted.with_values(restricted.values / A)


# ---------------------------------------------------------------------------
# probes

def random_cone_function(rng: np.random.Generator, n: int) -> GridFunction:
    """Random non-negative non-increasing node function: steps plus a linear ramp."""
    x = nodes(n)
    vals = np.zeros(n + 1)
    for _ in range(rng.integers(1, 6)):
        vals += rng.exponential() * (x <= rng.uniform())
    vals += rng.exponential() * (1.0 - x) * rng.integers(0, 2)
    vals += rng.uniform(0.0, 0.2)
    return GridFunction(vals, n, "nodes")


@dataclass
class LasotaYorkeResult:
    alpha: float
    b_hat: float
    passed: bool
    ratios: np.ndarray = field(repr=False)


def lasota_yorke_probe(T: PiecewiseMap, s: float, samples: int, n: int = 1024,
                       seed: int = 0, gamma: float | None = None,
                       weights: np.ndarray | None = None) -> LasotaYorkeResult:
    """Smallest ``b`` with ``V(F_s f / gamma) <= alpha V(f) + b ||f||`` over random cone functions.

    ``alpha = (1/T'(0) + 1) / 2``; the constant function is always the first sample.
    """
    if gamma is None or weights is None:
        spec = collocation_spectrum(T, float(s), n)
        gamma = spec.gamma if gamma is None else gamma
        weights = spec.ms_weights if weights is None else weights
    slope0 = float(T.dT(np.array([0.0]))[0])
    alpha = 0.5 * (1.0 / slope0 + 1.0)
    op = build_collocation(T, float(s), n)
    rng = np.random.default_rng(seed)
    fs = [GridFunction.constant(1.0, n)] + [random_cone_function(rng, n) for _ in range(samples)]
    ratios = []
    for f in fs:
        Ff = f.with_values(op.apply(f.values) / gamma)
        ratios.append((bv_variation(Ff) - alpha * bv_variation(f)) / l1_norm(f, weights))
    ratios = np.array(ratios)
    b_hat = float(np.max(ratios))
    ok = bool(np.isfinite(b_hat))
    if ok:
        for f, r in zip(fs, ratios):
            Ff = f.with_values(op.apply(f.values) / gamma)
            if bv_variation(Ff) > alpha * bv_variation(f) + b_hat * l1_norm(f, weights) + 1e-12:
                ok = False
    return LasotaYorkeResult(alpha, b_hat, ok, ratios)


def hulse_probe(T: PiecewiseMap, s: float, n_iter: int, n: int = 1024,
                gamma: float | None = None) -> dict[int, np.ndarray]:
    """Endpoint gaps ``F^m chi_[0,a_k](0) - F^m chi_[0,a_k](1)`` for ``m = 1..n_iter``."""
    if gamma is None:
        gamma = collocation_spectrum(T, float(s), n).gamma
    op = build_collocation(T, float(s), n)
    x = nodes(n)
    out = {}
    for k, a_k in enumerate(T.a[1:], start=1):
        f = (x <= a_k + 1e-15).astype(float)
        gaps = np.empty(n_iter)
        for m in range(n_iter):
            f = op.apply(f) / gamma
            gaps[m] = f[0] - f[-1]
        out[k] = gaps
    return out
