"""Kernel backend selection.

The compiled extension is used when it was built; setting
``AGENTNET_PURE_PYTHON=1`` forces the pure-Python fallback.
"""
import os

from . import _kernels_py as python_backend

compiled_backend = None
if not os.environ.get("AGENTNET_PURE_PYTHON"):
    try:
        from . import _kernels as compiled_backend
    except ImportError:  # extension not built
        compiled_backend = None

_active = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "cython" if compiled_backend is not None else "python"

jain_index = _active.jain_index
minmax_normalize = _active.minmax_normalize
score_candidates = _active.score_candidates
tx_time_us = _active.tx_time_us
LinkQueue = _active.LinkQueue

__all__ = [
    "BACKEND",
    "LinkQueue",
    "compiled_backend",
    "jain_index",
    "minmax_normalize",
    "python_backend",
    "score_candidates",
    "tx_time_us",
]
