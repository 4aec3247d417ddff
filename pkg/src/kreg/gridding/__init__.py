"""Kaiser-Bessel gridding kernels: compiled core with numpy fallback.

The W^3 gather/scatter per nonuniform sample dominates NUFFT runtime, so it
lives in a small Cython extension (``kreg.gridding._kernels``). When the
extension is missing, or ``KREG_PURE_PYTHON=1`` is set, the vectorized numpy
implementation is used instead. Both backends consume the same precomputed
interpolation plan and produce results equal to within float rounding; each
is individually deterministic (sequential accumulation order).

``benchmarks/bench_gridding.py`` compares the two implementations.
"""

import os

from ._plan import GridPlan, kb_kernel, make_plan
from . import _kernels_py

_FORCED_PY = os.environ.get("KREG_PURE_PYTHON", "") == "1"

if not _FORCED_PY:
    try:
        from . import _kernels as _impl

        HAVE_COMPILED = True
    except ImportError:
        from . import _kernels_py as _impl

        HAVE_COMPILED = False
else:
    _impl = _kernels_py
    HAVE_COMPILED = False

BACKEND = "compiled" if HAVE_COMPILED else "python"


def interpolate(grid, plan):
    """Gather nonuniform samples from an oversampled spectrum grid."""
    return _impl.interpolate(grid, plan)


def spread(values, plan, grid_shape):
    """Scatter weighted samples onto an oversampled spectrum grid (adjoint)."""
    return _impl.spread(values, plan, grid_shape)


__all__ = [
    "GridPlan",
    "make_plan",
    "kb_kernel",
    "interpolate",
    "spread",
    "HAVE_COMPILED",
    "BACKEND",
]
