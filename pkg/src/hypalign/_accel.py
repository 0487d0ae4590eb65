"""Selects between numba-compiled kernels and the pure-numpy fallback.

Set ``HYPALIGN_DISABLE_NUMBA=1`` to force the numpy path (also used when
numba is not importable).
"""
import os

_DISABLED = os.environ.get("HYPALIGN_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:
    _njit = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _DISABLED


def njit(fn):
    """``numba.njit(cache=True)`` when numba is available, identity otherwise."""
    if _njit is None:
        return fn
    return _njit(cache=True)(fn)
