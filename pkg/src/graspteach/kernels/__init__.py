"""Image kernels with a compiled fast path.

Imports the Cython extension when it was built, otherwise falls back to
the NumPy implementation. ``BACKEND`` reports which one is active; both
expose the same functions and produce identical results.
"""

import os

from . import _numpy as numpy_backend

if os.environ.get("GRASPTEACH_FORCE_NUMPY_KERNELS"):
    _impl = numpy_backend
    BACKEND = "numpy"
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
        BACKEND = "cython"
    except ImportError:
        _impl = numpy_backend
        BACKEND = "numpy"

convolve2d = _impl.convolve2d
min_filter = _impl.min_filter
max_filter = _impl.max_filter
label_components = _impl.label_components
geodesic_costs = _impl.geodesic_costs

__all__ = [
    "BACKEND",
    "convolve2d",
    "min_filter",
    "max_filter",
    "label_components",
    "geodesic_costs",
    "numpy_backend",
]
