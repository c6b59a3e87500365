"""JIT switch.

Setting ``CUBECOMB_DISABLE_NUMBA=1`` (or having no importable numba) selects the
pure-numpy kernels. The flag is read once at import time.
"""

from __future__ import annotations

import os

_FLAG = os.environ.get("CUBECOMB_DISABLE_NUMBA", "").strip().lower()
NUMBA_REQUESTED = _FLAG not in ("1", "true", "yes", "on")

try:
    if not NUMBA_REQUESTED:
        raise ImportError("disabled by CUBECOMB_DISABLE_NUMBA")
    import numba

    njit = numba.njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    numba = None
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn


def backend() -> str:
    return "numba" if HAVE_NUMBA else "numpy"
