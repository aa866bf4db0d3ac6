"""JIT switch for the hot kernels.

Set ``DRSN_DISABLE_NUMBA=1`` to force the pure-numpy code paths (useful for
debugging and for the benchmark that compares both).
"""

import os

_FLAG = os.environ.get("DRSN_DISABLE_NUMBA", "").strip().lower()

try:
    import numba as nb

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    nb = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _FLAG not in ("1", "true", "yes", "on")


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity decorator otherwise."""
    if HAVE_NUMBA:
        return nb.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda func: func
