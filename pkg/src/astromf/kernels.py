"""Kernel dispatch: compiled extension when available, NumPy fallback otherwise.

Set ``ASTROMF_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _fallback

BACKEND = "python"
uniform_block = _fallback.uniform_block
ss_costs = _fallback.ss_costs

if os.environ.get("ASTROMF_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels
    except ImportError:  # extension not built
        pass
    else:
        BACKEND = "cython"
        uniform_block = _kernels.uniform_block
        ss_costs = _kernels.ss_costs

__all__ = ["BACKEND", "uniform_block", "ss_costs"]
