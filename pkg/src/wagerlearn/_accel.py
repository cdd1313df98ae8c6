"""Numba switch.

Set ``WAGERLEARN_DISABLE_NUMBA=1`` to run every kernel through its pure
numpy implementation. Without numba installed the numpy path is used
automatically.
"""

import os

ENV_FLAG = "WAGERLEARN_DISABLE_NUMBA"

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is an optional extra
    numba = None
    HAVE_NUMBA = False


def numba_disabled_by_env() -> bool:
    return os.environ.get(ENV_FLAG, "").strip().lower() not in ("", "0", "false", "no")


USE_NUMBA = HAVE_NUMBA and not numba_disabled_by_env()


def njit(fn):
    """Compile ``fn`` with numba when available, else return it unchanged."""
    if not HAVE_NUMBA:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)
