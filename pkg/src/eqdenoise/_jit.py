"""Numba switch.

Hot kernels are written once as plain Python/NumPy loops and compiled with
``numba.njit`` unless ``EQDENOISE_DISABLE_NUMBA=1`` is set in the environment
(or numba is not importable), in which case :mod:`eqdenoise.kernels` falls back
to vectorised NumPy implementations.
"""

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

_DISABLED = os.environ.get("EQDENOISE_DISABLE_NUMBA", "0").lower() in ("1", "true", "yes")

USE_NUMBA = HAVE_NUMBA and not _DISABLED


def njit(func):
    """Compile ``func`` in nopython mode with on-disk caching.

    FMA contraction is the only fast-math relaxation: it keeps results
    bit-stable between runs while still letting LLVM vectorise the inner loops.
    NaN/inf semantics are untouched so non-finite losses are still caught.
    """
    if not HAVE_NUMBA:  # pragma: no cover
        return func
    return numba.njit(cache=True, fastmath={"contract"}, boundscheck=False)(func)
