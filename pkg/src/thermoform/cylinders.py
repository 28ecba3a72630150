"""Cylinder sets of the branch partition and the diagnostics built on them."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import kernels
from .aconvex import classify_beta, find_beta
from .map_model import PiecewiseMap, apply
from .transfer import GridFunction, build_collocation, collocation_spectrum

log = logging.getLogger(__name__)

__all__ = [
    "Cylinder", "BProbeResult", "ScalingResult",
    "refine_partition", "cylinder_containing", "condition_B_probe", "parabolic_scaling",
    "conditional_expectation", "lemma46_check", "max_cylinder_mass", "cylinder_mass",
]

EMPTY_TOL = 1e-14


@dataclass(frozen=True)
class Cylinder:
    word: tuple
    lo: float
    hi: float
    contains_beta: bool

    @property
    def interval(self) -> tuple[float, float]:
        return (self.lo, self.hi)

    @property
    def length(self) -> float:
        return self.hi - self.lo


def _contains(lo, hi, beta):
    # closed on both ends so that beta = 1 is caught by the last cylinder [w, 1)
    return (lo <= beta) & (beta <= hi)


@lru_cache(maxsize=64)
def _partition_arrays(T: PiecewiseMap, r: int):
    """Words (m x r, 1-based) and endpoints of all nonempty depth-r cylinders, sorted by ``lo``."""
    if r < 1:
        raise ValueError("depth must be at least 1")
    a = T.a
    words = np.arange(1, T.n_branches + 1)[:, None]
    lo, hi = a[:-1].copy(), a[1:].copy()
    for _ in range(r - 1):
        w_parts, lo_parts, hi_parts = [], [], []
        for k in range(1, T.n_branches + 1):
            plo, phi = T.psi(k, lo), T.psi(k, hi)
            keep = phi - plo > EMPTY_TOL
            if not np.any(keep):
                continue
            w_parts.append(np.hstack([np.full((keep.sum(), 1), k), words[keep]]))
            lo_parts.append(plo[keep])
            hi_parts.append(phi[keep])
        words = np.vstack(w_parts)
        lo, hi = np.concatenate(lo_parts), np.concatenate(hi_parts)
        order = np.argsort(lo, kind="stable")
        words, lo, hi = words[order], lo[order], hi[order]
    return words, lo, hi


def refine_partition(T: PiecewiseMap, r: int, beta: float | None = None) -> list[Cylinder]:
    """All nonempty depth-``r`` cylinders, built by pulling endpoints back through the inverse branches."""
    if r > 20:
        raise ValueError("depth above 20 is not supported")
    if beta is None:
        beta = find_beta(T)[0]
    words, lo, hi = _partition_arrays(T, r)
    inside = _contains(lo, hi, beta)
    return [Cylinder(tuple(int(d) for d in w), float(l), float(h), bool(c))
            for w, l, h, c in zip(words, lo, hi, inside)]


def cylinder_containing(T: PiecewiseMap, x: float, r: int) -> tuple:
    """Itinerary ``(d_1, ..., d_r)`` of ``x``: ``d_{i+1}`` is the branch holding ``T^i x``."""
    word = []
    y = float(x)
    for _ in range(r):
        word.append(int(T.branch_of(np.array([y]))[0]) + 1)
        y = apply(T, y)
    return tuple(word)


# ---------------------------------------------------------------------------
# condition (B)

@dataclass
class BProbeResult:
    M: np.ndarray
    counts: list
    per_cylinder: list = field(repr=False)
    decreasing: bool = False
    n_max: int = 0
    n_grid: int = 0
    gamma: float = 1.0


def _indicator_rows(lo, hi, n):
    # each node's dual cell [x - h/2, x + h/2] intersected with [lo, hi], as a fraction
    h = 1.0 / n
    x = np.arange(n + 1) * h
    left = np.maximum(x[None, :] - h / 2, np.maximum(lo[:, None], 0.0))
    right = np.minimum(x[None, :] + h / 2, np.minimum(hi[:, None], 1.0))
    width = np.where(x == 0, h / 2, h)
    width = np.where(x == 1.0, h / 2, width)
    return np.clip((right - left) / width[None, :], 0.0, 1.0)


def condition_B_probe(T: PiecewiseMap, s: float, gamma: float | None = None, r_max: int = 8,
                      n_max: int | None = None, n_grid: int | None = None,
                      beta: float | None = None) -> BProbeResult:
    """``M_r = max_cyl min_{1<=n<=n_max} ||F_s^n chi_cyl||_inf / gamma^n`` over cylinders away from beta.

    Indicators are sampled by the overlap of each node's dual cell with the
    cylinder, so a node sitting on a cylinder end gets the value 1/2.
    """
    if beta is None:
        beta, n_star, _ = find_beta(T)
    else:
        n_star = int(np.argmin(np.abs(T.split_at(beta).a - beta)))
    if n_max is None:
        kind = classify_beta(T, beta, n_star).beta_type
        n_max = 2000 if kind == "indifferent" else 200
    need = 4 * 2 ** r_max
    n = max(int(n_grid or 0), need, 256)
    n = 1 << int(np.ceil(np.log2(n)))
    op = build_collocation(T, float(s), n)
    if gamma is None:
        gamma = collocation_spectrum(T, float(s), n).gamma
    M, counts, per = [], [], []
    for r in range(1, r_max + 1):
        words, lo, hi = _partition_arrays(T, r)
        keep = ~_contains(lo, hi, beta)
        if not np.any(keep):
            log.warning("condition_B_probe: no cylinders away from beta at depth %d", r)
            break
        X = _indicator_rows(lo[keep], hi[keep], n)
        best, _ = kernels.sup_min_iterate(op.matrix, X, 1.0 / gamma, n_max)
        per.append(best)
        counts.append(int(keep.sum()))
        M.append(float(best.max()))
    M = np.array(M)
    dec = bool(len(M) > 1 and np.all(np.diff(M) < 0))
    return BProbeResult(M, counts, per, dec, n_max, n, float(gamma))


# ---------------------------------------------------------------------------
# parabolic scaling at an indifferent beta

@dataclass
class ScalingResult:
    w: np.ndarray
    D: np.ndarray
    theta_hat: float
    polynomial: bool
    exponent_ratio: float


def _fit_slope(r, D):
    return float(np.polyfit(np.log(r), np.log(D), 1)[0])


def parabolic_scaling(T: PiecewiseMap, r_max: int = 30) -> ScalingResult:
    """Backward orbit ``w_{r+1} = psi_{N*}(w_r)`` from 0 and the growth of ``(T^r)'(w_{r+1})``.

    ``theta_hat`` is the log-log slope over ``r in [r_max/2, r_max]``; the
    growth is called polynomial when the slopes of the two halves of that
    window differ by less than 20%.
    """
    beta, n_star, _ = find_beta(T)
    split = T.split_at(beta)
    w = [0.0]
    for _ in range(r_max + 1):
        nxt = float(split.psi(n_star, np.array([w[-1]]))[0])
        if not np.isfinite(nxt) or nxt <= w[-1]:
            log.warning("parabolic_scaling: backward orbit stalled after %d steps", len(w) - 1)
            break
        w.append(nxt)
    w = np.array(w)
    slopes = split.dT(w)
    # D_r = prod_{m=2}^{r+1} T'(w_m)
    logs = np.log(slopes[2:])
    D = np.exp(np.cumsum(logs))
    r = np.arange(1, len(D) + 1, dtype=float)
    lo = max(1, len(D) // 2)
    sel = slice(lo - 1, len(D))
    theta = _fit_slope(r[sel], D[sel])
    mid = (lo - 1 + len(D)) // 2
    first = _fit_slope(r[lo - 1:mid + 1], D[lo - 1:mid + 1])
    second = _fit_slope(r[mid:], D[mid:])
    ratio = second / first if first > 0 else np.inf
    return ScalingResult(w[1:], D, theta, bool(ratio < 1.2), float(ratio))


# ---------------------------------------------------------------------------
# conditional expectations on cylinder sigma-algebras

def _positions(f: GridFunction, ms):
    ms = np.asarray(ms, float)
    n = f.n_cells
    if len(ms) == n + 1:
        pts = np.arange(n + 1) / n
        layout = "nodes"
    elif len(ms) == n:
        pts = (np.arange(n) + 0.5) / n
        layout = "cells"
    else:
        raise ValueError("weights do not match the grid of f")
    return pts, np.asarray(f(pts), float), layout


def _labels(T, r, pts):
    _, lo, _ = _partition_arrays(T, r)
    return np.clip(np.searchsorted(lo, pts, side="right") - 1, 0, len(lo) - 1)


def conditional_expectation(f: GridFunction, r: int, ms, T: PiecewiseMap) -> GridFunction:
    """Average of ``f`` against ``ms`` on each depth-``r`` cylinder, returned on the weights' layout."""
    ms = np.asarray(ms, float)
    pts, vals, layout = _positions(f, ms)
    lab = _labels(T, r, pts)
    m = int(lab.max()) + 1
    mass = np.bincount(lab, weights=ms, minlength=m)
    tot = np.bincount(lab, weights=ms * vals, minlength=m)
    empty = mass <= 0
    if np.any(empty & (np.bincount(lab, minlength=m) > 0)):
        log.warning("conditional_expectation: %d cylinders carry no mass", int(empty.sum()))
    avg = np.where(empty, 0.0, tot / np.where(empty, 1.0, mass))
    return GridFunction(avg[lab], f.n_cells, layout)


def cylinder_mass(T: PiecewiseMap, word, ms, n_cells: int) -> float:
    ms = np.asarray(ms, float)
    pts = np.arange(len(ms)) / n_cells if len(ms) == n_cells + 1 else (np.arange(len(ms)) + 0.5) / n_cells
    words, lo, hi = _partition_arrays(T, len(word))
    idx = np.nonzero(np.all(words == np.asarray(word)[None, :], axis=1))[0]
    if len(idx) == 0:
        return 0.0
    l, h = lo[idx[0]], hi[idx[0]]
    inside = (pts >= l) & ((pts < h) | ((h >= 1.0) & (pts <= 1.0)))
    return float(ms[inside].sum())


def max_cylinder_mass(T: PiecewiseMap, r: int, ms, n_cells: int, beta: float) -> float:
    """Largest weight carried by a depth-``r`` cylinder away from ``beta``."""
    ms = np.asarray(ms, float)
    pts = np.arange(len(ms)) / n_cells if len(ms) == n_cells + 1 else (np.arange(len(ms)) + 0.5) / n_cells
    words, lo, hi = _partition_arrays(T, r)
    lab = _labels(T, r, pts)
    mass = np.bincount(lab, weights=ms, minlength=len(lo))
    keep = ~_contains(lo, hi, beta)
    return float(mass[keep].max()) if np.any(keep) else 0.0


def lemma46_check(f: GridFunction, c: float, r: int, M_hat, ms, T: PiecewiseMap,
                  n_star: int) -> tuple[bool, float, float]:
    """``int |f - E(f | U_r)| dm <= c (M_r + m(I_{N* ... N*}))``; returns ``(passed, lhs, rhs)``."""
    ms = np.asarray(ms, float)
    _, vals, _ = _positions(f, ms)
    cond = conditional_expectation(f, r, ms, T)
    lhs = float(np.sum(ms * np.abs(vals - cond.values)))
    rhs = c * (float(M_hat[r - 1]) + cylinder_mass(T, (n_star,) * r, ms, f.n_cells))
    return bool(lhs <= rhs * (1 + 1e-6) + 1e-8), lhs, rhs
