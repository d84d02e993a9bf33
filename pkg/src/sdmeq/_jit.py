"""Numba switch.

Set ``SDMEQ_DISABLE_NUMBA=1`` to route every hot kernel through its pure
numpy implementation. The flag is read once, at import time.
"""
import os

_flag = os.environ.get("SDMEQ_DISABLE_NUMBA", "").strip().lower()
DISABLED = _flag in ("1", "true", "yes", "on")

try:
    if DISABLED:
        raise ImportError
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(fn):
            return fn

        return wrap


def backend():
    return "numba" if HAS_NUMBA else "numpy"
