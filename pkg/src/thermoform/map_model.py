"""Piecewise monotone, orientation-preserving interval maps and their inverse branches.

Branch indices ``k`` in the public functions are 1-based, matching the digit
alphabet used for cylinder words. One-sided evaluation (``side="left"`` /
``side="right"``) stands in for doubling points at discontinuities.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import expr as ex

__all__ = [
    "Branch", "ExprBranch", "TableBranch", "ImplicitBranch", "PiecewiseMap",
    "MapError", "MapSchemaError", "MonotonicityError", "BreakpointError",
    "load_map", "map_from_dict", "apply", "inverse_branch", "inverse_branch_deriv",
    "branch_image", "BISECTION_TOL",
]

BISECTION_TOL = 1e-13
MONOTONE_SAMPLES = 10_000


class MapError(ValueError):
    pass


class MapSchemaError(MapError):
    pass


class MonotonicityError(MapError):
    def __init__(self, branch: int, x: float):
        super().__init__(f"branch {branch} is not strictly increasing near x={x:.17g}")
        self.branch = branch
        self.x = x


class BreakpointError(MapError):
    pass


def _frac(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, str):
        return Fraction(v.strip())
    return Fraction(v).limit_denominator(10**12)


class Branch:
    """One monotone piece ``T_k`` on ``[lo, hi)``.

    Subclasses supply ``forward``, ``dforward``, ``inverse`` (on the branch
    image) and ``dinverse``; all are vectorised over numpy arrays.
    """

    lo: float
    hi: float
    image_lo: float
    image_hi: float

    def forward(self, x):
        raise NotImplementedError

    def dforward(self, x):
        raise NotImplementedError

    def inverse(self, y):
        raise NotImplementedError

    def dinverse(self, y):
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError

    def _set_image(self):
        lo = float(self.forward(np.array([self.lo]))[0])
        hi = float(self.forward(np.array([self.hi]))[0])
        if not np.isfinite(hi):
            hi = _left_limit(lambda t: float(self.forward(np.array([t]))[0]), self.hi)
        self.image_lo = min(max(lo, 0.0), 1.0) if abs(lo) < 1e-12 or lo >= 0 else lo
        self.image_hi = min(hi, 1.0) if hi <= 1.0 + 1e-12 else hi


def _left_limit(f: Callable[[float], float], point: float, tol: float = 1e-9) -> float:
    """Limit of ``f`` as its argument approaches ``point`` from below."""
    return _one_sided_limit(f, point, -1.0, tol)


def _one_sided_limit(f, point, direction, tol=1e-9):
    # approach sequence point -/+ 2^-m with Richardson extrapolation (first-order error)
    prev_rich = None
    prev = None
    last = np.nan
    for m in range(20, 41):
        v = f(point + direction * 2.0 ** -m)
        if not np.isfinite(v):
            continue
        if prev is not None:
            rich = 2.0 * v - prev
            if prev_rich is not None and abs(rich - prev_rich) < tol:
                return rich
            prev_rich = rich
        prev = v
        last = v
    return prev_rich if prev_rich is not None else last


class ExprBranch(Branch):
    """Branch given by a closed-form expression, optionally with a closed-form inverse."""

    def __init__(self, lo, hi, forward_expr: str, inverse_expr: str | None = None):
        self.lo_exact, self.hi_exact = _frac(lo), _frac(hi)
        self.lo, self.hi = float(self.lo_exact), float(self.hi_exact)
        self.forward_text = forward_expr
        self.inverse_text = inverse_expr
        self.fexpr = ex.parse(forward_expr)
        self.dfexpr = ex.differentiate(self.fexpr)
        self.iexpr = ex.parse(inverse_expr) if inverse_expr else None
        self.diexpr = ex.differentiate(self.iexpr) if self.iexpr is not None else None
        self._set_image()
        # snap image ends to exact rationals when the formula allows it
        for attr, at in (("image_lo", self.lo_exact), ("image_hi", self.hi_exact)):
            v = ex.evaluate_exact(self.fexpr, at)
            if v is not None and abs(float(v) - getattr(self, attr)) < 1e-9:
                setattr(self, attr, float(v))

    def forward(self, x):
        return ex.evaluate(self.fexpr, np.asarray(x, float), strict=False)

    def dforward(self, x):
        return ex.evaluate(self.dfexpr, np.asarray(x, float), strict=False)

    def inverse(self, y):
        y = np.asarray(y, float)
        if self.iexpr is not None:
            return np.clip(ex.evaluate(self.iexpr, y, strict=False), self.lo, self.hi)
        return _bisect(self.forward, y, self.lo, self.hi)

    def dinverse(self, y):
        y = np.asarray(y, float)
        if self.diexpr is not None:
            out = ex.evaluate(self.diexpr, y, strict=False)
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                out = 1.0 / self.dforward(self.inverse(y))
        # unbounded slope of T_k shows up as inf/nan here; the inverse slope is 0
        return np.where(np.isfinite(out), out, 0.0)

    def describe(self):
        return {"expr": self.forward_text, "inverse_expr": self.inverse_text}


def _bisect(f, y, lo: float, hi: float, tol: float = BISECTION_TOL):
    """Vectorised bisection for ``f(x) = y`` on ``[lo, hi]`` with ``f`` increasing."""
    y = np.asarray(y, float)
    a = np.full(y.shape, lo)
    b = np.full(y.shape, hi)
    n_iter = int(np.ceil(np.log2(max(hi - lo, tol) / tol))) + 1
    for _ in range(n_iter):
        mid = 0.5 * (a + b)
        fm = f(mid)
        below = fm < y
        a = np.where(below, mid, a)
        b = np.where(below, b, mid)
    return 0.5 * (a + b)


class TableBranch(Branch):
    """Branch given by a strictly increasing table of ``(x, T(x))`` pairs, linearly interpolated."""

    def __init__(self, xs, ys, lo=None, hi=None):
        self.xs = np.asarray(xs, float)
        self.ys = np.asarray(ys, float)
        self.lo_exact = _frac(lo) if lo is not None else _frac(float(self.xs[0]))
        self.hi_exact = _frac(hi) if hi is not None else _frac(float(self.xs[-1]))
        self.lo, self.hi = float(self.lo_exact), float(self.hi_exact)
        self._slopes = np.diff(self.ys) / np.diff(self.xs)
        self._set_image()

    def forward(self, x):
        return np.interp(x, self.xs, self.ys)

    def dforward(self, x):
        i = np.clip(np.searchsorted(self.xs, x, side="right") - 1, 0, len(self._slopes) - 1)
        return self._slopes[i]

    def inverse(self, y):
        return np.interp(y, self.ys, self.xs)

    def dinverse(self, y):
        # left-continuous slope of the inverse table
        i = np.clip(np.searchsorted(self.ys, y, side="left") - 1, 0, len(self._slopes) - 1)
        return 1.0 / self._slopes[i]

    def describe(self):
        return {"table": [[float(a), float(b)] for a, b in zip(self.xs, self.ys)]}


class ImplicitBranch(TableBranch):
    """Last branch defined by ``sum_i psi_i' = 1`` given all other branches.

    ``psi'`` is known exactly as ``1 - sum of the other inverse slopes``; ``psi``
    itself is tabulated by composite Simpson integration and ``T`` is the
    linearly interpolated inverse table.
    """

    def __init__(self, lo, others: Sequence[Branch], panels: int = 2**14):
        self.others = list(others)
        lo_f = float(_frac(lo))
        jumps = sorted({b.image_lo for b in others} | {b.image_hi for b in others})
        jumps = [j for j in jumps if 0.0 < j < 1.0]
        y = np.union1d(np.linspace(0.0, 1.0, panels + 1), jumps)
        a, b = y[:-1], y[1:]
        # left ends use the right-hand limit across jumps of the other slopes
        fa = self._dpsi(np.nextafter(a, 2.0))
        fm = self._dpsi(0.5 * (a + b))
        fb = self._dpsi(b)
        pieces = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
        psi = lo_f + np.concatenate([[0.0], np.cumsum(pieces)])
        self.closure_error = abs(psi[-1] - 1.0)
        if self.closure_error > 1e-8:
            raise MapError(f"implicit branch does not close at 1 (error {self.closure_error:.3g})")
        psi[0], psi[-1] = lo_f, 1.0
        self.panels = panels
        super().__init__(psi, y, lo=lo, hi=1)

    def _dpsi(self, y):
        total = np.zeros_like(np.asarray(y, float))
        for b in self.others:
            total = total + _dpsi_branch(b, y)
        return 1.0 - total

    def dinverse(self, y):
        return self._dpsi(np.asarray(y, float))

    def dforward(self, x):
        with np.errstate(divide="ignore"):
            return 1.0 / self._dpsi(self.forward(x))

    def describe(self):
        return {"implicit": "sum of inverse slopes equals 1", "panels": self.panels}


def _dpsi_branch(b: Branch, y):
    """Extended inverse slope of branch ``b``: zero off its image, left-continuous at image ends."""
    y = np.asarray(y, float)
    inside = (y > b.image_lo) & (y <= b.image_hi)
    if b.image_lo <= 0.0:
        inside |= y == 0.0
    out = np.zeros(y.shape)
    if np.any(inside):
        out[inside] = b.dinverse(y[inside])
    return out


@dataclass(frozen=True)
class PiecewiseMap:
    name: str
    breakpoints: tuple  # exact Fractions a_0 .. a_N
    branches: tuple
    source: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def n_branches(self) -> int:
        return len(self.branches)

    @property
    def a(self) -> np.ndarray:
        return np.array([float(v) for v in self.breakpoints])

    def content_hash(self) -> str:
        blob = json.dumps(self.source, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def branch_of(self, x, side: str = "right"):
        """0-based index of the branch whose domain holds ``x`` (one-sided at breakpoints)."""
        a = self.a
        x = np.asarray(x, float)
        if side == "right":
            idx = np.searchsorted(a, x, side="right") - 1
        else:
            idx = np.searchsorted(a, x, side="left") - 1
        return np.clip(idx, 0, self.n_branches - 1)

    def __call__(self, x, side: str = "right"):
        return apply(self, x, side)

    def psi(self, k: int, x):
        """Extended inverse branch ``psi_k`` (1-based ``k``), vectorised."""
        b = self.branches[k - 1]
        x = np.asarray(x, float)
        out = np.where(x <= b.image_lo, b.lo, b.hi)
        inside = (x > b.image_lo) & (x < b.image_hi)
        if np.any(inside):
            out = np.array(out, float)
            out[inside] = b.inverse(x[inside])
        return out

    def dpsi(self, k: int, x):
        return _dpsi_branch(self.branches[k - 1], x)

    def dT(self, x, side: str = "right"):
        """``T'`` evaluated one-sidedly; ``inf`` where a branch slope is unbounded."""
        x = np.asarray(x, float)
        idx = self.branch_of(x, side)
        out = np.empty(x.shape)
        for i, b in enumerate(self.branches):
            m = idx == i
            if np.any(m):
                with np.errstate(all="ignore"):
                    v = b.dforward(x[m])
                out[m] = np.where(np.isnan(v), np.inf, v)
        return out

    def split_at(self, beta: float) -> "PiecewiseMap":
        """Copy with a virtual breakpoint at ``beta`` (no-op if it is already a breakpoint)."""
        a = self.a
        if np.any(np.abs(a - beta) < 1e-12):
            return self
        k = int(np.searchsorted(a, beta)) - 1
        b = self.branches[k]
        left = _restricted(b, b.lo, beta)
        right = _restricted(b, beta, b.hi)
        beta_exact = _frac(beta)
        bps = self.breakpoints[: k + 1] + (beta_exact,) + self.breakpoints[k + 1:]
        brs = self.branches[:k] + (left, right) + self.branches[k + 1:]
        src = dict(self.source, split_at=float(beta))
        return PiecewiseMap(self.name, bps, brs, src)


class _Restricted(Branch):
    def __init__(self, parent: Branch, lo: float, hi: float):
        self.parent = parent
        self.lo, self.hi = float(lo), float(hi)
        self.lo_exact, self.hi_exact = _frac(lo), _frac(hi)
        self._set_image()

    def forward(self, x):
        return self.parent.forward(x)

    def dforward(self, x):
        return self.parent.dforward(x)

    def inverse(self, y):
        return np.clip(self.parent.inverse(y), self.lo, self.hi)

    def dinverse(self, y):
        return self.parent.dinverse(y)

    def describe(self):
        return {"restricted": [self.lo, self.hi], "of": self.parent.describe()}


def _restricted(b: Branch, lo, hi) -> Branch:
    return _Restricted(b, lo, hi)


# ---------------------------------------------------------------------------
# public operations

def apply(T: PiecewiseMap, x, side: str = "right"):
    """Evaluate ``T`` at ``x``; at a breakpoint ``side="left"`` takes the limit from below."""
    if side not in ("left", "right"):
        raise ValueError("side must be 'left' or 'right'")
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, float))
    idx = T.branch_of(x, side)
    out = np.empty(x.shape)
    for i, b in enumerate(T.branches):
        m = idx == i
        if np.any(m):
            out[m] = b.forward(x[m])
    return float(out[0]) if scalar else out


def inverse_branch(T: PiecewiseMap, k: int, x):
    scalar = np.ndim(x) == 0
    out = T.psi(k, np.atleast_1d(x))
    return float(out[0]) if scalar else out


def inverse_branch_deriv(T: PiecewiseMap, k: int, x):
    """``psi_k'``: ``1/T_k'(psi_k(x))`` on the branch image, 0 off its closure."""
    scalar = np.ndim(x) == 0
    out = T.dpsi(k, np.atleast_1d(x))
    return float(out[0]) if scalar else out


def branch_image(T: PiecewiseMap, k: int) -> tuple[float, float]:
    b = T.branches[k - 1]
    return (b.image_lo, b.image_hi)


# ---------------------------------------------------------------------------
# loading

def map_from_dict(d: dict) -> PiecewiseMap:
    """Build and validate a map from the JSON-file dictionary layout."""
    if not isinstance(d, dict):
        raise MapSchemaError("map definition must be a JSON object")
    for key in ("breakpoints", "branches"):
        if key not in d:
            raise MapSchemaError(f"missing key {key!r}")
    name = str(d.get("name", "unnamed"))
    try:
        bps = tuple(_frac(v) for v in d["breakpoints"])
    except (ValueError, ZeroDivisionError, TypeError) as err:
        raise MapSchemaError(f"bad breakpoint: {err}") from None
    if len(bps) < 2:
        raise MapSchemaError("need at least two breakpoints")
    if bps[0] != 0 or bps[-1] != 1:
        raise MapSchemaError("breakpoints must start at 0 and end at 1")
    if any(b <= a for a, b in zip(bps, bps[1:])):
        raise MapSchemaError("breakpoints must be strictly increasing")
    specs = d["branches"]
    if not isinstance(specs, list) or len(specs) != len(bps) - 1:
        raise MapSchemaError("need exactly one branch per breakpoint interval")

    branches = []
    for k, spec in enumerate(specs, start=1):
        lo, hi = bps[k - 1], bps[k]
        if not isinstance(spec, dict):
            raise MapSchemaError(f"branch {k}: expected an object")
        try:
            if "expr" in spec:
                b = ExprBranch(lo, hi, spec["expr"], spec.get("inverse_expr"))
            elif "table" in spec:
                tab = np.asarray(spec["table"], float)
                if tab.ndim != 2 or tab.shape[1] != 2 or len(tab) < 2:
                    raise MapSchemaError(f"branch {k}: table must be a list of [x, y] pairs")
                if abs(tab[0, 0] - float(lo)) > 1e-12 or abs(tab[-1, 0] - float(hi)) > 1e-12:
                    raise BreakpointError(f"branch {k}: table spans [{tab[0,0]}, {tab[-1,0]}], "
                                          f"expected [{float(lo)}, {float(hi)}]")
                b = TableBranch(tab[:, 0], tab[:, 1], lo=lo, hi=hi)
            else:
                raise MapSchemaError(f"branch {k}: needs 'expr' or 'table'")
        except ex.ExprSyntaxError as err:
            raise MapSchemaError(f"branch {k}: {err}") from None
        _validate_branch(k, b)
        branches.append(b)
    src = {"name": name, "breakpoints": [str(v) for v in bps],
           "branches": [b.describe() for b in branches]}
    return PiecewiseMap(name, bps, tuple(branches), src)


def _validate_branch(k: int, b: Branch):
    xs = np.linspace(b.lo, b.hi, MONOTONE_SAMPLES + 1)[:-1]
    with np.errstate(all="ignore"):
        ys = b.forward(xs)
    if not np.all(np.isfinite(ys)):
        bad = xs[~np.isfinite(ys)][0]
        raise MapSchemaError(f"branch {k}: non-finite value at x={bad}")
    dif = np.diff(ys)
    if np.any(dif <= 0):
        raise MonotonicityError(k, float(xs[np.argmax(dif <= 0)]))
    tol = 1e-12
    if b.image_lo < -tol or b.image_hi > 1 + tol:
        raise MapSchemaError(f"branch {k}: image [{b.image_lo}, {b.image_hi}] leaves [0, 1]")
    if isinstance(b, ExprBranch) and b.iexpr is not None:
        ys = np.linspace(b.image_lo, b.image_hi, 1001)[1:-1]
        err = np.max(np.abs(b.forward(b.inverse(ys)) - ys))
        if not err <= 1e-9:
            raise MapSchemaError(f"branch {k}: inverse_expr does not invert expr (error {err:.3g})")


def load_map(source) -> PiecewiseMap:
    """Load a map from a JSON file path, or by built-in name."""
    from .builtins import BUILTINS, builtin_map

    if isinstance(source, str) and source in BUILTINS:
        return builtin_map(source)
    path = Path(source)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise MapSchemaError(f"{path}: invalid JSON: {err}") from None
    return map_from_dict(data)
