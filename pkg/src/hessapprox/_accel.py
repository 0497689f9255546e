"""Optional numba acceleration.

Set ``HESSAPPROX_DISABLE_NUMBA=1`` to force the pure-numpy kernels, e.g. for
debugging or on platforms where numba is unavailable.
"""

import os

_DISABLED = os.environ.get("HESSAPPROX_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError
    import numba

    HAVE_NUMBA = True
    njit = numba.njit
except ImportError:
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f


def backend() -> str:
    return "numba" if HAVE_NUMBA else "numpy"
