"""Kernel backend selection.

Prefers the compiled extension when it imported cleanly; otherwise uses the
pure-numpy twin. Set ``DIPWTV_PURE_PYTHON=1`` to force the fallback (useful
for benchmarking and debugging).
"""

import os

from . import _kernels_py

if os.environ.get("DIPWTV_PURE_PYTHON"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels_cy as _impl

        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

grad_field = _impl.grad_field
divergence = _impl.divergence
pointwise_magnitude = _impl.pointwise_magnitude
group_shrink_field = _impl.group_shrink_field


def backend() -> str:
    """Name of the active kernel backend: 'compiled' or 'python'."""
    return BACKEND
