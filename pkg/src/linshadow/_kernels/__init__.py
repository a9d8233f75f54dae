"""Sweep kernels with import-time backend selection.

The compiled extension is preferred when present; setting the environment
variable LINSHADOW_PURE_PYTHON=1 forces the numpy fallback (useful for
benchmarking and debugging).
"""

import os

from . import _fallback

if os.environ.get("LINSHADOW_PURE_PYTHON", "") == "1":
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        _impl = _fallback
        BACKEND = "python"

rk4_matrix = _impl.rk4_matrix
rk4_affine = _impl.rk4_affine
rk4_commutator = getattr(_impl, "rk4_commutator", _fallback.rk4_commutator)

__all__ = ["rk4_matrix", "rk4_affine", "rk4_commutator", "BACKEND"]
