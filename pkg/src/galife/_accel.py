"""Backend selection for the compiled kernels.

Set ``GALIFE_DISABLE_NUMBA=1`` to force the pure-numpy fallbacks even when
numba is importable.
"""
import os

_FLAG = os.environ.get("GALIFE_DISABLE_NUMBA", "").strip().lower()
DISABLE_NUMBA = _FLAG in ("1", "true", "yes", "on")

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and not DISABLE_NUMBA


def njit(*args, **kwargs):
    """``numba.njit`` with caching on; returns None when numba is missing."""
    if not HAS_NUMBA:
        if args and callable(args[0]):
            return None
        return lambda fn: None
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)
    return numba.njit(*args, **kwargs)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
