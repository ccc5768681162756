"""Kernel backend selection.

The compiled extension is used when it imported cleanly; the numpy
fallback otherwise. ATTFREE_BACKEND=numpy|cython forces a choice (forcing
cython without the extension built is an error).
"""

from __future__ import annotations

import os

from . import np_kernels

try:
    from . import _core as _ext
except ImportError:  # extension not built; pure fallback
    _ext = None

HAVE_EXTENSION = _ext is not None


def available_backends() -> list[str]:
    return ["cython", "numpy"] if HAVE_EXTENSION else ["numpy"]


def get_backend(name: str | None = None):
    """Resolve a backend module by name, env var, or availability."""
    choice = name or os.environ.get("ATTFREE_BACKEND", "auto")
    if choice in ("auto", ""):
        choice = "cython" if HAVE_EXTENSION else "numpy"
    if choice == "numpy":
        return np_kernels
    if choice == "cython":
        if not HAVE_EXTENSION:
            raise RuntimeError("cython backend requested but the extension is not built")
        return _ext
    raise ValueError(f"unknown backend {choice!r} (expected 'auto', 'numpy', or 'cython')")
