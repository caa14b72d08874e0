"""Kernel selection: compiled extension when available, numpy fallback
otherwise. Set SEPNLS_PURE_PYTHON=1 to force the fallback."""

import os

from . import _ref

if os.environ.get("SEPNLS_PURE_PYTHON", "") not in ("", "0"):
    _impl = _ref
else:
    try:
        from . import _native as _impl
    except ImportError:
        _impl = _ref

HAVE_NATIVE = bool(getattr(_impl, "HAVE_NATIVE", False))
mgs_sweep = _impl.mgs_sweep
rk4_kinematics = _impl.rk4_kinematics

# The reference path is always importable for parity tests and benchmarks.
reference = _ref
active = _impl
