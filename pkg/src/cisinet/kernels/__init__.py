"""Kernel lane selection: compiled extension when available, numpy otherwise.

Set CISINET_PURE_PYTHON=1 to force the numpy lane (used by the lane-parity
tests and the kernel benchmark).  Both lanes implement the same functions
with the same semantics; results agree to floating-point rounding.
"""

import os

from . import _sinkhorn_np as numpy_lane

EXTENSION_ACTIVE = False

if os.environ.get("CISINET_PURE_PYTHON") != "1":
    try:
        from . import _sinkhorn as _compiled_lane

        EXTENSION_ACTIVE = True
    except ImportError:
        _compiled_lane = None

if EXTENSION_ACTIVE:
    sinkhorn_forward = _compiled_lane.sinkhorn_forward
    sinkhorn_backward = _compiled_lane.sinkhorn_backward
else:
    sinkhorn_forward = numpy_lane.sinkhorn_forward
    sinkhorn_backward = numpy_lane.sinkhorn_backward

__all__ = [
    "EXTENSION_ACTIVE",
    "numpy_lane",
    "sinkhorn_forward",
    "sinkhorn_backward",
]
