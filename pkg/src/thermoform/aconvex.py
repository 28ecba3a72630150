"""Structural checks on a loaded map: expansion at 0, average convexity, the
invariant hull ``[0, beta]``, the type of ``beta`` and the Markov property."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .map_model import PiecewiseMap, _one_sided_limit

__all__ = [
    "Cond1Result", "CondCResult", "BetaClass", "MarkovResult", "ValidationReport",
    "BetaError", "check_condition_1", "check_condition_C", "find_beta",
    "classify_beta", "check_markov", "check_identity_32", "validate",
]

MONO_SLACK = 1e-10
INDIFF_TOL = 1e-9
HULL_TOL = 1e-12
HULL_MAX_ITER = 10_000


class BetaError(RuntimeError):
    def __init__(self, last_sup: float, iterations: int):
        super().__init__(f"hull sup did not stabilise after {iterations} steps (last {last_sup!r})")
        self.last_sup = last_sup


@dataclass
class Cond1Result:
    passed: bool
    slope_at_0: float
    branch_start_slopes: list


@dataclass
class CondCResult:
    s: float
    passed: bool
    violation: tuple | None = None  # (k, x) of the first increase


@dataclass
class BetaClass:
    beta_type: str
    dpsi_left: float
    alternative: bool | None
    hypothesis: str | None


@dataclass
class MarkovResult:
    markov: bool
    witnesses: list = field(default_factory=list)

    @property
    def witness(self):
        return self.witnesses[0] if self.witnesses else None


def _start_slope(b) -> float:
    v = float(b.dforward(np.array([b.lo]))[0])
    if np.isfinite(v):
        return v
    return float(_one_sided_limit(lambda t: float(b.dforward(np.array([t]))[0]), b.lo, 1.0))


def check_condition_1(T: PiecewiseMap) -> Cond1Result:
    """``T'(0+) > 1`` and every branch starts with a positive slope."""
    slopes = [_start_slope(b) for b in T.branches]
    ok = slopes[0] > 1.0 and all(v > 0.0 for v in slopes)
    return Cond1Result(bool(ok), slopes[0], slopes)


def check_condition_C(T: PiecewiseMap, s: float, n_grid: int = 4096) -> CondCResult:
    """Each partial sum ``sum_{i<=k} (psi_i')^s`` must be non-increasing on the grid."""
    if s <= 0 or n_grid < 2:
        raise ValueError("need s > 0 and n_grid >= 2")
    x = np.linspace(0.0, 1.0, n_grid)
    total = np.zeros(n_grid)
    for k in range(1, T.n_branches + 1):
        total = total + T.dpsi(k, x) ** s
        bad = np.nonzero(np.diff(total) > MONO_SLACK)[0]
        if len(bad):
            return CondCResult(float(s), False, (k, float(x[bad[0] + 1])))
    return CondCResult(float(s), True, None)


def _hull_sup(T: PiecewiseMap, x: float) -> float:
    # sup of T over [0, x]; branches wholly inside contribute their left limit at hi
    best = 0.0
    for b in T.branches:
        if b.lo > x:
            break
        if b.hi <= x:
            best = max(best, b.image_hi)
        else:
            best = max(best, float(b.forward(np.array([x]))[0]))
    return min(best, 1.0)


def find_beta(T: PiecewiseMap) -> tuple[float, int, int]:
    """Right end of the forward-invariant hull of ``[0, a_1]``.

    Returns ``(beta, n_star, r)``; ``n_star`` indexes ``beta`` among the
    breakpoints of ``T.split_at(beta)``.
    """
    sup = float(T.a[1])
    r = 0
    for it in range(HULL_MAX_ITER):
        new = max(sup, _hull_sup(T, sup))
        if new - sup <= HULL_TOL:
            break
        sup = new
        r += 1
    else:
        raise BetaError(sup, HULL_MAX_ITER)
    if 1.0 - sup <= HULL_TOL:
        sup = 1.0
    split = T.split_at(sup)
    n_star = int(np.argmin(np.abs(split.a - sup)))
    return sup, n_star, r


def classify_beta(T: PiecewiseMap, beta: float, n_star: int) -> BetaClass:
    """Type of ``beta`` from the left limit of ``psi_{N*}'`` there."""
    split = T.split_at(beta)
    d = float(_one_sided_limit(lambda t: float(split.dpsi(n_star, np.array([t]))[0]), beta, -1.0))
    alternative = None
    if beta < 1.0 and n_star < split.n_branches:
        v = _one_sided_limit(lambda t: float(split.psi(n_star + 1, np.array([t]))[0]), beta, 1.0)
        alternative = bool(abs(v - 1.0) <= INDIFF_TOL)
    if abs(d - 1.0) <= INDIFF_TOL:
        kind = "indifferent"
    elif d < 1.0:
        kind = "expanding"
    else:
        kind = "discontinuous-at-beta"
    if d < 1.0 - INDIFF_TOL:
        hyp = "expanding-limit"
    elif alternative:
        hyp = "alternative"
    else:
        hyp = None
    return BetaClass(kind, d, alternative, hyp)


def check_markov(T: PiecewiseMap, tol: float = 1e-10) -> MarkovResult:
    """Every branch image must be a union of partition cells; lists all branches that fail."""
    a = T.a
    bad = []
    for k, b in enumerate(T.branches, start=1):
        ends_ok = all(np.min(np.abs(a - e)) <= tol for e in (b.image_lo, b.image_hi))
        if not ends_ok:
            bad.append(k)
    return MarkovResult(not bad, bad)


def check_identity_32(T: PiecewiseMap, beta: float, n_star: int, n_grid: int = 4096) -> bool:
    """``sum_{i<=N*} (psi_i(x) - a_{i-1}) >= x`` on ``[0, beta]`` with equality at ``beta``."""
    split = T.split_at(beta)
    a = split.a
    x = np.linspace(0.0, beta, n_grid)
    total = sum(split.psi(i, x) - a[i - 1] for i in range(1, n_star + 1))
    ok = bool(np.all(total >= x - 1e-9))
    at_beta = sum(float(split.psi(i, np.array([beta]))[0]) - a[i - 1] for i in range(1, n_star + 1))
    return bool(ok and abs(at_beta - beta) <= 1e-8)


@dataclass
class ValidationReport:
    cond1: dict
    condC: list
    beta: float
    n_star: int
    beta_type: str
    markov: dict
    identity_32: bool

    @property
    def passed(self) -> bool:
        return self.cond1["passed"] and all(c["passed"] for c in self.condC)

    def to_dict(self) -> dict:
        return asdict(self)


def validate(T: PiecewiseMap, s_values=(1.0,), n_grid: int = 4096) -> ValidationReport:
    c1 = check_condition_1(T)
    cc = [asdict(check_condition_C(T, s, n_grid)) for s in s_values]
    beta, n_star, _ = find_beta(T)
    kind = classify_beta(T, beta, n_star)
    mk = check_markov(T)
    ident = check_identity_32(T, beta, n_star, n_grid)
    return ValidationReport(
        cond1=asdict(c1), condC=cc, beta=beta, n_star=n_star, beta_type=kind.beta_type,
        markov={"markov": mk.markov, "witnesses": mk.witnesses}, identity_32=ident,
    )
