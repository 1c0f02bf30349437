"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly, unless the environment
variable ``BIFAS_DISABLE_NUMBA`` is set to a truthy value (``1``, ``true``,
``yes``). The choice is made once at import time; both implementations stay
reachable as ``kernels.numpy_impl`` and ``kernels.numba_impl`` for testing and
benchmarking.
"""

import os

from . import _numpy as numpy_impl

try:
    from . import _numba as numba_impl
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba_impl = None

_disabled = os.environ.get("BIFAS_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

BACKEND = "numba" if numba_impl is not None and not _disabled else "numpy"
_impl = numba_impl if BACKEND == "numba" else numpy_impl

bilateral_forward = _impl.bilateral_forward
bilateral_backward = _impl.bilateral_backward
refine_forward = _impl.refine_forward
refine_backward = _impl.refine_backward
maxpool2_forward = _impl.maxpool2_forward
maxpool2_backward = _impl.maxpool2_backward

__all__ = [
    "BACKEND",
    "numpy_impl",
    "numba_impl",
    "bilateral_forward",
    "bilateral_backward",
    "refine_forward",
    "refine_backward",
    "maxpool2_forward",
    "maxpool2_backward",
]
