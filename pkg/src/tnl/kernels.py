"""Backend selection for the solver's inner loops.

The compiled extension is used when it imports; setting ``TNL_PURE_PYTHON=1``
forces the numpy fallback.
"""
import os

if os.environ.get("TNL_PURE_PYTHON", "") not in ("", "0"):
    from tnl._pykernels import bilinear, rk4_feet
    BACKEND = "python"
else:
    try:
        from tnl._ckernels import bilinear, rk4_feet
        BACKEND = "cython"
    except ImportError:
        from tnl._pykernels import bilinear, rk4_feet
        BACKEND = "python"

__all__ = ["BACKEND", "bilinear", "rk4_feet"]
