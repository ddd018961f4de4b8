"""Kernel selection at import time.

The compiled extension is used when it is importable; ``NEUROLAN_PURE_PYTHON=1``
forces the pure-Python kernels.
"""
import os

from . import _fallback

if os.environ.get("NEUROLAN_PURE_PYTHON", "") not in ("", "0"):
    kernels = _fallback
    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels
        BACKEND = "cython"
    except ImportError:  # extension not built
        kernels = _fallback
        BACKEND = "python"
