"""Numba switch.

Hot kernels are written twice: a loop version compiled with ``numba.njit`` and
a vectorised numpy version. Set ``D2DPOLICY_DISABLE_NUMBA=1`` to route every
dispatcher to the numpy path (useful when numba is unavailable or when
debugging). Both paths are always importable so they can be benchmarked and
cross-checked side by side.
"""

import os

_FLAG = "D2DPOLICY_DISABLE_NUMBA"

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def numba_disabled():
    return os.environ.get(_FLAG, "").strip().lower() in ("1", "true", "yes", "on")


USE_NUMBA = HAVE_NUMBA and not numba_disabled()


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity otherwise.

    Compilation is requested even when the env flag is set so that the
    benchmark can still time the compiled variant explicitly.
    """
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)

    def wrap(fn):
        if not HAVE_NUMBA:
            return fn
        return numba.njit(**kwargs)(fn)

    if len(args) == 1 and callable(args[0]):
        return wrap(args[0])
    return wrap
