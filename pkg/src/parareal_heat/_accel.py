"""Numba switch.

Hot kernels are written once as plain Python loops and compiled with
``numba.njit`` unless ``PARAREAL_HEAT_NUMBA=0`` is set in the environment,
in which case callers get the pure-numpy implementations instead.
"""

import os

NUMBA_ENABLED = os.environ.get("PARAREAL_HEAT_NUMBA", "1").lower() not in ("0", "false", "no", "off")

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None
    NUMBA_ENABLED = False


def njit(func):
    """Compile ``func`` in nopython/nogil mode, or return it unchanged."""
    if numba is None:  # pragma: no cover
        return func
    return numba.njit(cache=True, nogil=True)(func)
