"""Numba dispatch.

Hot kernels are written once as plain Python loops and compiled with
``numba.njit`` when available.  Setting ``CENNQ_DISABLE_NUMBA=1`` (or
running without numba installed) selects the pure-numpy implementations
instead.  Both paths stay importable so they can be benchmarked against
each other.
"""
import os

try:
    import numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

_DISABLED = os.environ.get("CENNQ_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

USE_NUMBA = HAVE_NUMBA and not _DISABLED


def njit(func):
    """Compile ``func`` in nopython mode, or hand it back untouched."""
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
