"""Kernel backend selection.

Imports the compiled extension when present, otherwise the NumPy fallback.
Set ``MEPPFLOW_PURE_PYTHON=1`` to force the fallback (used by the benchmark
and by tests that compare the two backends).
"""

import os

if os.environ.get("MEPPFLOW_PURE_PYTHON", "") == "1":
    from . import _kernels_py as kernels
else:
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]
    except ImportError:
        from . import _kernels_py as kernels  # type: ignore[no-redef]

COMPILED: bool = bool(kernels.COMPILED)
