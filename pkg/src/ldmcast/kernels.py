"""Hot-kernel dispatch: compiled extension when built, numpy fallback otherwise.

Set ``LDMCAST_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
if os.environ.get("LDMCAST_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
else:
    _impl = _kernels_py

sinr_pair = _impl.sinr_pair
link_prune_sweep = _impl.link_prune_sweep

__all__ = ["BACKEND", "sinr_pair", "link_prune_sweep"]
