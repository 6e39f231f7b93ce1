"""Import-time selection between the compiled kernels and the numpy fallback.

Set ``DBAR_EIT_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
if os.environ.get("DBAR_EIT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
else:
    _impl = _kernels_py


def _scalar_aware(fun):
    def wrapped(x, *args):
        out = fun(x, *args)
        return complex(out) if np.ndim(x) == 0 else out

    wrapped.__name__ = fun.__name__
    wrapped.__doc__ = fun.__doc__
    return wrapped


scaled_re_ei = _scalar_aware(_impl.scaled_re_ei)
faddeev_green = _scalar_aware(_impl.faddeev_green)
EULER_GAMMA = _kernels_py.EULER_GAMMA

__all__ = ["BACKEND", "scaled_re_ei", "faddeev_green", "EULER_GAMMA"]
