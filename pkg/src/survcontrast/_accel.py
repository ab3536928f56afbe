"""Switch between numba-compiled kernels and the pure-numpy fallback.

Set ``SURVCONTRAST_DISABLE_NUMBA=1`` before import to run every kernel through
its numpy / plain-Python path. The flag is read once, at import time.
"""
import os

_FALSY = {"", "0", "false", "no", "off"}

DISABLE_NUMBA = os.environ.get("SURVCONTRAST_DISABLE_NUMBA", "").strip().lower() not in _FALSY

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = numba is not None and not DISABLE_NUMBA


def njit(*args, **kwargs):
    """``numba.njit`` when acceleration is on, identity otherwise."""
    if USE_NUMBA:
        kwargs.setdefault("cache", True)
        kwargs.setdefault("nogil", True)
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f


def backend():
    return "numba" if USE_NUMBA else "numpy"
