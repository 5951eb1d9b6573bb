"""Backend selection for the geodesic kernels.

The compiled extension is used when it imports; setting the environment
variable ``STACKEL_LAB_PURE_PYTHON=1`` forces the pure-Python fallback.
"""
from __future__ import annotations

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("STACKEL_LAB_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _compiled
    except ImportError:  # extension not built
        _compiled = None
    if _compiled is not None:
        _impl = _compiled
        BACKEND = "cython"


def available_backends() -> dict:
    out = {"python": _pykernels}
    try:
        from . import _ckernels
        out["cython"] = _ckernels
    except ImportError:
        pass
    return out


def staeckel_rhs(coef, dcoef, y):
    return _impl.staeckel_rhs(coef, dcoef, y)


def run_staeckel(coef, dcoef, y0, t0, t_end, rtol, atol, max_steps, planes, first_step=-1.0):
    return _impl.run_staeckel(coef, dcoef, y0, t0, t_end, rtol, atol, max_steps, planes, first_step)
