"""Transfer operators, conformal measures and pressure for piecewise monotone interval maps."""

__version__ = "0.1.0"

from .builtins import BUILTINS, builtin_map  # noqa: E402
from .map_model import PiecewiseMap, load_map, map_from_dict  # noqa: E402
from .transfer import GridFunction, build_collocation, build_ulam, leading_spectrum  # noqa: E402
from .thermo import pressure, pressure_curve  # noqa: E402

__all__ = [
    "BUILTINS", "builtin_map", "PiecewiseMap", "load_map", "map_from_dict",
    "GridFunction", "build_collocation", "build_ulam", "leading_spectrum",
    "pressure", "pressure_curve", "__version__",
]
