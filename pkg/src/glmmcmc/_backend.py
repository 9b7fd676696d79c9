"""Pick the compiled kernels when available; ``GLMMCMC_PURE_PYTHON=1`` forces the fallback."""
import os

from . import _kernels_py

if os.environ.get("GLMMCMC_PURE_PYTHON", "") not in ("", "0"):
    kernels = _kernels_py
else:
    try:
        from . import _kernels as kernels
    except ImportError:  # extension not built
        kernels = _kernels_py

BACKEND = "python" if kernels is _kernels_py else "cython"
