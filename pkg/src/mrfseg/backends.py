"""Kernel backend selection.

The compiled extension is used when present; the NumPy fallback is a
drop-in replacement.  Set MRFSEG_BACKEND=python or =compiled to force a
choice (forcing "compiled" without the built extension is an error).
"""

import os

from . import pykernels

try:
    from . import _speedups
except ImportError:
    _speedups = None

HAVE_COMPILED = _speedups is not None

_BACKENDS = {"python": pykernels}
if HAVE_COMPILED:
    _BACKENDS["compiled"] = _speedups


def _initial_backend():
    forced = os.environ.get("MRFSEG_BACKEND")
    if forced:
        if forced not in ("python", "compiled"):
            raise ValueError(f"MRFSEG_BACKEND must be 'python' or 'compiled', got {forced!r}")
        if forced == "compiled" and not HAVE_COMPILED:
            raise ImportError("MRFSEG_BACKEND=compiled but mrfseg._speedups is not built")
        return forced
    return "compiled" if HAVE_COMPILED else "python"


_active = _initial_backend()


def active_backend() -> str:
    return _active


def use_backend(name: str) -> None:
    """Switch kernels at runtime (used by tests and the benchmark)."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown or unavailable backend {name!r}")
    _active = name


def slic_assign(*args):
    return _BACKENDS[_active].slic_assign(*args)


def smo_solve(*args):
    return _BACKENDS[_active].smo_solve(*args)
