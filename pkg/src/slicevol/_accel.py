"""Backend switch for the hot loops.

Kernels are written once as plain scalar loops and compiled with numba when it
is importable. Setting ``SLICEVOL_NO_NUMBA=1`` forces the vectorised numpy
implementations instead (useful for debugging and for platforms without an
LLVM toolchain).
"""
import os

_FLAG = os.environ.get("SLICEVOL_NO_NUMBA", "").strip().lower()

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _FLAG not in ("1", "true", "yes", "on")


def njit(func):
    """Compile ``func`` in nopython/nogil mode, or return it untouched."""
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
