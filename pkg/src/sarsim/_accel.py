"""Backend switch for the hot kernels.

Kernels are written once as loop code over numpy arrays. When numba is
importable they are compiled with ``njit``; setting ``SARSIM_DISABLE_NUMBA=1``
before import runs the same code uninterpreted and routes the vectorisable
kernels through their numpy implementations instead.
"""
from __future__ import annotations

import os

_FLAG = os.environ.get("SARSIM_DISABLE_NUMBA", "").strip().lower()
DISABLED_BY_ENV = _FLAG not in ("", "0", "false", "no")

NUMBA_ENABLED = False
if not DISABLED_BY_ENV:
    try:
        from numba import njit as _njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False

BACKEND = "numba" if NUMBA_ENABLED else "numpy"


def jit(fn):
    """Compile ``fn`` with numba when enabled, otherwise return it unchanged."""
    if NUMBA_ENABLED:
        return _njit(cache=True)(fn)
    return fn
