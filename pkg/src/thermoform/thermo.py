"""Pressure, Lyapunov exponent and entropy for the potential ``-s log|T'|``,
and checks that ``g_beta m_s`` behaves as an equilibrium state."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .aconvex import find_beta
from .map_model import PiecewiseMap, apply
from .transfer import (
    DensityError, GridFunction, SpectralResult, build_collocation, build_ulam,
    collocation_spectrum, leading_spectrum, restrict_density_gbeta,
)

log = logging.getLogger(__name__)

__all__ = [
    "PressureCurve", "spectrum", "pressure", "lyapunov", "entropy", "pressure_curve",
    "normalized_operator_apply", "equilibrium_duality_check", "lemma54_check",
]

LOWER_BOUND = 1e-8


def spectrum(T: PiecewiseMap, s: float, n: int, tol: float = 1e-10,
             max_iter: int = 200_000, peripheral: bool = True) -> SpectralResult:
    """Ulam eigen-data at ``s`` on ``n`` cells."""
    return leading_spectrum(build_ulam(T, float(s), n), tol, max_iter, peripheral=peripheral)


def pressure(T: PiecewiseMap, s: float, n: int, tol: float = 1e-10) -> float:
    """``log gamma``; a non-converged run is logged and still returned."""
    res = spectrum(T, s, n, tol, peripheral=False)
    if not res.converged:
        log.warning("pressure at s=%g did not converge", s)
    return res.pressure


def _log_slope(T: PiecewiseMap, pts: np.ndarray, h: float) -> np.ndarray:
    d = np.abs(T.dT(pts))
    bad = ~np.isfinite(d) | (d <= 0)
    if np.any(bad):
        # unbounded slope at a node: step into the cell instead of evaluating there
        shifted = np.where(pts[bad] + h / 2 <= 1.0, pts[bad] + h / 2, pts[bad] - h / 2)
        d[bad] = np.abs(T.dT(shifted))
    out = np.log(d)
    out[np.abs(d - 1.0) <= 1e-9] = 0.0
    return out


def _pts(n_cells: int, n_weights: int) -> np.ndarray:
    if n_weights == n_cells + 1:
        return np.arange(n_cells + 1) / n_cells
    return (np.arange(n_cells) + 0.5) / n_cells


def lyapunov(T: PiecewiseMap, s: float, density: GridFunction, ms) -> float:
    """``sum_j log|T'(x_j)| g(x_j) w_j`` on the positions of the weights."""
    ms = np.asarray(ms, float)
    pts = _pts(density.n_cells, len(ms))
    return float(np.sum(_log_slope(T, pts, 1.0 / density.n_cells) * density(pts) * ms))


def entropy(T: PiecewiseMap, s: float, P: float, lam: float) -> float:
    return P + s * lam


@dataclass
class PressureCurve:
    s_values: np.ndarray
    pressure: np.ndarray
    lyapunov: np.ndarray
    entropy: np.ndarray
    converged: np.ndarray
    ms_near_atomic: np.ndarray
    indifferent: bool = False
    verdicts: dict = field(default_factory=dict)

    def rows(self):
        for i in range(len(self.s_values)):
            yield (float(self.s_values[i]), float(self.pressure[i]), float(self.lyapunov[i]),
                   float(self.entropy[i]), bool(self.converged[i]))


def _verdicts(s, P, conv, indifferent):
    idx = np.nonzero(conv)[0]
    out = {"nonincreasing": None, "convex": None, "P1_zero": None, "flat_above_1": None}
    if len(s) < 2:
        return out
    ss, pp = s[idx], P[idx]
    out["nonincreasing"] = bool(np.all(np.diff(pp) <= 1e-6)) if len(idx) > 1 else None
    if len(idx) > 2:
        h = np.mean(np.diff(ss))
        d1 = np.diff(pp) / np.diff(ss)
        d2 = 2.0 * np.diff(d1) / (ss[2:] - ss[:-2]) * h * h
        out["convex"] = bool(np.all(d2 >= -1e-5))
    one = np.nonzero(np.isclose(ss, 1.0))[0]
    if len(one):
        out["P1_zero"] = bool(abs(pp[one[0]]) <= 1e-2)
    if indifferent:
        band = (ss >= 1.0) & (ss <= 2.0)
        out["flat_above_1"] = bool(np.all(np.abs(pp[band]) <= 2e-2)) if np.any(band) else None
    return out


def pressure_curve(T: PiecewiseMap, s_grid, n: int, tol: float = 1e-10,
                   max_iter: int = 200_000, workers: int = 1) -> PressureCurve:
    """Tabulate ``P``, ``lambda`` and ``h`` over ``s_grid`` with shape verdicts."""
    s_grid = np.asarray(s_grid, float)
    if np.any(s_grid <= 0) or np.any(np.diff(s_grid) <= 0):
        raise ValueError("s grid must be positive and increasing")

    def one(s):
        res = spectrum(T, s, n, tol, max_iter, peripheral=False)
        lam = lyapunov(T, s, res.density, res.ms_weights)
        return res.pressure, lam, res.converged, res.ms_near_atomic

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            runs = list(pool.map(one, s_grid))
    else:
        runs = [one(s) for s in s_grid]
    P = np.array([r[0] for r in runs])
    lam = np.array([r[1] for r in runs])
    conv = np.array([r[2] for r in runs])
    atomic = np.array([r[3] for r in runs])
    from .aconvex import classify_beta
    beta, n_star, _ = find_beta(T)
    indiff = classify_beta(T, beta, n_star).beta_type == "indifferent"
    curve = PressureCurve(s_grid, P, lam, P + s_grid * lam, conv, atomic, indiff,
                          _verdicts(s_grid, P, conv, indiff))
    return curve


# ---------------------------------------------------------------------------
# equilibrium checks (all on the nodal discretisation)

def normalized_operator_apply(T: PiecewiseMap, s: float, gamma: float, g_beta: GridFunction,
                              f: GridFunction) -> GridFunction:
    """``G_s f = F_s(g_beta f) / (gamma g_beta)`` at the nodes where ``g_beta`` lives."""
    if g_beta.layout != "nodes":
        raise ValueError("g_beta must be a nodal grid function")
    n = g_beta.n_cells
    gb = g_beta.values
    support = gb > 0
    if not np.any(support) or gb[support].min() < LOWER_BOUND:
        raise DensityError("density not bounded below")
    fv = f(np.arange(n + 1) / n) if (f.layout != "nodes" or f.n_cells != n) else f.values
    C = build_collocation(T, float(s), n)
    num = C.apply(gb * fv)
    out = np.zeros(n + 1)
    out[support] = num[support] / (gamma * gb[support])
    return GridFunction(out, n, "nodes")


def _nodal(T, s, spectral: SpectralResult) -> SpectralResult:
    if spectral.density.layout == "nodes":
        return spectral
    return collocation_spectrum(T, float(s), spectral.density.n_cells)


def _g_beta(T, spectral):
    beta = find_beta(T)[0]
    g_beta = restrict_density_gbeta(spectral.density, beta, spectral.ms_weights)
    gb = g_beta.values
    if gb[gb > 0].min() < LOWER_BOUND:
        raise DensityError("density not bounded below")
    return g_beta, beta


def equilibrium_duality_check(T: PiecewiseMap, s: float, spectral: SpectralResult,
                              test_fns) -> float:
    """Largest ``|mu(G_s f) - mu(f)|`` over ``test_fns`` with ``mu = g_beta m_s``; NaN when excluded."""
    spec = _nodal(T, s, spectral)
    if spec.ms_near_atomic:
        return float("nan")
    try:
        g_beta, _ = _g_beta(T, spec)
    except DensityError:
        return float("nan")
    n = g_beta.n_cells
    x = np.arange(n + 1) / n
    w = spec.ms_weights
    gaps = []
    for f in test_fns:
        Gf = normalized_operator_apply(T, s, spec.gamma, g_beta, f)
        fv = f(x)
        gaps.append(abs(np.sum(Gf.values * g_beta.values * w) - np.sum(fv * g_beta.values * w)))
    return float(max(gaps))


def lemma54_check(T: PiecewiseMap, s: float, spectral: SpectralResult) -> float:
    """``|int log g_bar dmu + s lambda(mu)|`` with ``g_bar = |T'|^-s g_beta / g_beta o T``; NaN when excluded."""
    spec = _nodal(T, s, spectral)
    if spec.ms_near_atomic:
        return float("nan")
    try:
        g_beta, beta = _g_beta(T, spec)
    except DensityError:
        return float("nan")
    n = g_beta.n_cells
    x = np.arange(n + 1) / n
    w = spec.ms_weights
    mu = g_beta.values * w
    live = mu > 0
    ls = _log_slope(T, x[live], 1.0 / n)
    gb_here = g_beta.values[live]
    gb_there = g_beta(apply(T, x[live]))
    if np.min(gb_there) < LOWER_BOUND:
        return float("nan")
    log_gbar = -s * ls + np.log(gb_here) - np.log(gb_there)
    lam = float(np.sum(ls * mu[live]))
    return float(abs(np.sum(log_gbar * mu[live]) + s * lam))
