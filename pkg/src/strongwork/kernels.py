"""Kernel backend selection.

The compiled extension is used when it imports; setting
``STRONGWORK_PURE_PYTHON=1`` forces the numpy reference implementation.
"""

from __future__ import annotations

import os

from . import _ladder_py

BACKEND = "python"
if os.environ.get("STRONGWORK_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ladder as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _ladder_py
else:
    _impl = _ladder_py

shift_accumulate = _impl.shift_accumulate
shifted_overlaps = _impl.shifted_overlaps

__all__ = ["BACKEND", "shift_accumulate", "shifted_overlaps"]
