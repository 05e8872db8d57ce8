"""Kernel dispatch: compiled Cython core when importable, numpy fallback otherwise.

Set ``INTERMITTENCY_LAB_PURE=1`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _pykernels as python

compiled = None
if not os.environ.get("INTERMITTENCY_LAB_PURE"):
    try:
        from . import _ckernels as compiled
    except ImportError:
        compiled = None

_impl = compiled if compiled is not None else python
BACKEND = "cython" if compiled is not None else "python"

phase_average_quadform = _impl.phase_average_quadform
phase_average_matrix = _impl.phase_average_matrix
lipschitz_sweep = _impl.lipschitz_sweep
