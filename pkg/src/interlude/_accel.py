"""Backend switch for the numeric kernels.

Kernels come in two flavours: explicit loops compiled with numba, and a
vectorised numpy path. Set ``INTERLUDE_DISABLE_NUMBA=1`` to force numpy; the
numpy path is also used when numba is not importable.
"""

from __future__ import annotations

import os

_DISABLED = os.environ.get("INTERLUDE_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError
    import numba

    HAVE_NUMBA = True
except ImportError:
    numba = None
    HAVE_NUMBA = False

BACKEND = "numba" if HAVE_NUMBA else "numpy"


def njit(fn):
    """Compile with numba when available, else return ``fn`` unchanged."""
    if HAVE_NUMBA:
        return numba.njit(cache=True)(fn)
    return fn


def resolve(backend: str | None) -> str:
    if backend is None:
        return BACKEND
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is disabled or missing")
    return backend
