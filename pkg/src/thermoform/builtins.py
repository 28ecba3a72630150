"""Built-in maps: the two parabolic examples, the doubling map and a convex full-branch map."""
from __future__ import annotations

from functools import lru_cache

from .map_model import ImplicitBranch, PiecewiseMap, map_from_dict

EXAMPLE22 = {
    "name": "example22",
    "breakpoints": ["0", "1/3", "1"],
    "branches": [
        {"expr": "(1/3)*(2 + 3*x - 2*sqrt(1 - 3*x))",
         "inverse_expr": "x - 4/3 + (2/3)*sqrt(4 - 3*x)"},
        {"expr": "x - (3/4)*(1 - x)^2",
         "inverse_expr": "5/3 - (2/3)*sqrt(4 - 3*x)"},
    ],
}

# first four branches only; the fifth is implicit
EXAMPLE24_PARTIAL = {
    "name": "example24",
    "breakpoints": ["0", "1/4", "17/60", "2/5", "32/75"],
    "branches": [
        {"expr": "(1/4)*(3 - 3*sqrt(1 - 4*x) + 4*x)",
         "inverse_expr": "(1 - ((sqrt(25 - 16*x) - 3)/2)^2)/4"},
        {"expr": "15*x - 15/4", "inverse_expr": "(x + 15/4)/15"},
        {"expr": "(15/2)*x - 17/8", "inverse_expr": "(x + 17/8)/(15/2)"},
        {"expr": "15*x - 11/2", "inverse_expr": "(x + 11/2)/15"},
    ],
}

DOUBLING = {
    "name": "doubling",
    "breakpoints": ["0", "1/2", "1"],
    "branches": [
        {"expr": "2*x", "inverse_expr": "x/2"},
        {"expr": "2*x - 1", "inverse_expr": "(x + 1)/2"},
    ],
}

# convex branches with T_k(a_{k-1}) = 0 and T'(0) = 4/3
LY_CONVEX = {
    "name": "ly-convex",
    "breakpoints": ["0", "1/2", "1"],
    "branches": [
        {"expr": "(4/3)*(x + x^2)", "inverse_expr": "(sqrt(1 + 3*x) - 1)/2"},
        {"expr": "2*x^2 - x", "inverse_expr": "(1 + sqrt(1 + 8*x))/4"},
    ],
}

BUILTINS = ("example22", "example24", "doubling", "ly-convex")


def _example24() -> PiecewiseMap:
    partial = {**EXAMPLE24_PARTIAL, "breakpoints": EXAMPLE24_PARTIAL["breakpoints"] + ["1"],
               "branches": EXAMPLE24_PARTIAL["branches"] + [{"expr": "x"}]}
    # build branches 1-4 through the validating loader, then replace the placeholder
    scaffold = map_from_dict(partial)
    others = scaffold.branches[:4]
    fifth = ImplicitBranch(scaffold.breakpoints[4], others)
    src = {"name": "example24", "breakpoints": partial["breakpoints"],
           "branches": [b.describe() for b in others] + [fifth.describe()]}
    return PiecewiseMap("example24", scaffold.breakpoints, tuple(others) + (fifth,), src)


@lru_cache(maxsize=None)
def builtin_map(name: str) -> PiecewiseMap:
    if name == "example22":
        return map_from_dict(EXAMPLE22)
    if name == "example24":
        return _example24()
    if name == "doubling":
        return map_from_dict(DOUBLING)
    if name == "ly-convex":
        return map_from_dict(LY_CONVEX)
    raise KeyError(f"unknown built-in map {name!r}; choose from {', '.join(BUILTINS)}")
