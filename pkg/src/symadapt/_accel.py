"""Numba dispatch switch.

Set ``SYMADAPT_DISABLE_NUMBA=1`` to force the pure-numpy kernels.  The flag is
read once at import time.
"""

from __future__ import annotations

import os

_FLAG = os.environ.get("SYMADAPT_DISABLE_NUMBA", "").strip().lower()
NUMBA_DISABLED = _FLAG not in ("", "0", "false", "no", "off")

try:
    import numba  # noqa: F401
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(f):
            return f

        return wrap


USE_NUMBA = NUMBA_AVAILABLE and not NUMBA_DISABLED
