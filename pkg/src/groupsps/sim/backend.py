"""Kernel selection: compiled extension if importable, else pure Python.

``GROUPSPS_PURE_PYTHON=1`` forces the fallback.
"""

import os

from . import _kernel_py

if os.environ.get("GROUPSPS_PURE_PYTHON", "") not in ("", "0"):
    simulate = _kernel_py.simulate
    BACKEND = "python"
else:
    try:
        from ._kernel import simulate
        BACKEND = "cython"
    except ImportError:
        simulate = _kernel_py.simulate
        BACKEND = "python"
