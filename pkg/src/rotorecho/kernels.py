"""Backend selection for the hot loops.

The compiled Cython module is used when it imports; otherwise the numpy
fallback is used.  Set ``ROTORECHO_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _fallback

BACKEND = "python"
if os.environ.get("ROTORECHO_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _fallback
else:
    _impl = _fallback

iterate_cloud = _impl.iterate_cloud
echo_cloud = _impl.echo_cloud
action_sums = _impl.action_sums
tangent_log_growth = _impl.tangent_log_growth
polyline_crossings = _impl.polyline_crossings

__all__ = [
    "BACKEND",
    "iterate_cloud",
    "echo_cloud",
    "action_sums",
    "tangent_log_growth",
    "polyline_crossings",
]
