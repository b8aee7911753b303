"""Backend selection for the hot loops.

The compiled extension is used when it was built; otherwise, or when the
environment variable ``WIENERMONGE_PURE_PYTHON`` is set to a non-empty value
other than ``0``, the numpy implementation is used.  ``BACKEND`` names the
active one.
"""
import logging
import os

from . import _kernels_py

logger = logging.getLogger(__name__)

_force_python = os.environ.get("WIENERMONGE_PURE_PYTHON", "") not in ("", "0")

try:
    if _force_python:
        raise ImportError("pure Python backend requested")
    from . import _kernels as _impl
except ImportError as exc:
    logger.debug("compiled kernels unavailable (%s); using numpy fallback", exc)
    _impl = _kernels_py
    BACKEND = "python"
else:
    BACKEND = "cython"

zero_cycle_endpoints = _impl.zero_cycle_endpoints
worst_cycle = _impl.worst_cycle
ray_relation = _impl.ray_relation


def available_backends():
    """Map of backend name to module for every backend importable here."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels
    except ImportError:
        pass
    else:
        out["cython"] = _kernels
    return out
