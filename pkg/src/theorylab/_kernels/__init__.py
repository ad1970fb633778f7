"""Training-loop kernel selection.

The compiled extension and the pure-Python fallback implement the same loop
with the same floating-point semantics (scalar libm calls, fixed accumulation
order, shared bit generator), so which one runs never changes a result, only
how fast it arrives.  Set THEORYLAB_PURE_PYTHON=1 to force the fallback.
"""

from __future__ import annotations

import os

from . import _fallback

if os.environ.get("THEORYLAB_PURE_PYTHON"):
    _speedups = None
else:
    try:
        from . import _speedups  # type: ignore[attr-defined]
    except ImportError:
        _speedups = None

__all__ = ["active_implementation", "active_name", "implementations"]


def implementations() -> dict:
    """Name -> callable for every available implementation."""
    impls = {"python": _fallback.run_training_loop}
    if _speedups is not None:
        impls["compiled"] = _speedups.run_training_loop
    return impls


def active_name() -> str:
    return "compiled" if _speedups is not None else "python"


def active_implementation():
    return implementations()[active_name()]
