"""Numba switch.

Set ``ENTROPIC_AGENTS_NO_NUMBA=1`` to route every hot kernel through its
pure-numpy implementation (also used automatically when numba is missing).
"""
from __future__ import annotations

import functools
import os

_DISABLED = os.environ.get("ENTROPIC_AGENTS_NO_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _DISABLED


def njit(*args, **kwargs):
    """``numba.njit(cache=True)`` when numba is available, identity otherwise."""
    kwargs.setdefault("cache", True)

    def wrap(func):
        if HAVE_NUMBA:
            return numba.njit(**kwargs)(func)

        @functools.wraps(func)
        def inner(*a, **k):
            return func(*a, **k)

        return inner

    if len(args) == 1 and callable(args[0]):
        return wrap(args[0])
    return wrap


def set_threads(k: int | None) -> None:
    if k and HAVE_NUMBA:
        numba.set_num_threads(max(1, min(int(k), numba.config.NUMBA_NUM_THREADS)))


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
