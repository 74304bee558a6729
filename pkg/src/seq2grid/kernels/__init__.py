"""Numeric kernel backends.

The package ships two interchangeable implementations of the hot inner
loops (same-padded convolution and the fused grid update): a Cython
extension and a pure-numpy fallback.  Selection happens once at import
time via the ``SEQ2GRID_BACKEND`` environment variable:

* ``auto`` (default): use the compiled extension if it imported cleanly,
  otherwise fall back to numpy.
* ``compiled``: require the extension; raise if it is unavailable.
* ``numpy``: force the pure-numpy implementation.

Both backends take and return float64 C-contiguous arrays and produce
identical results; ``tests/test_kernels.py`` enforces the equivalence.
"""

import os

from . import numpy_backend

_choice = os.environ.get("SEQ2GRID_BACKEND", "auto").strip().lower()
if _choice not in ("auto", "compiled", "numpy"):
    raise ValueError(
        f"SEQ2GRID_BACKEND must be one of auto/compiled/numpy, got {_choice!r}"
    )

_compiled = None
if _choice in ("auto", "compiled"):
    try:
        from . import _core as _compiled
    except ImportError:
        if _choice == "compiled":
            raise ImportError(
                "SEQ2GRID_BACKEND=compiled but the seq2grid.kernels._core "
                "extension is not built; reinstall the package or use "
                "SEQ2GRID_BACKEND=numpy"
            ) from None

backend = _compiled if _compiled is not None else numpy_backend

BACKEND_NAME = backend.NAME

conv2d_forward = backend.conv2d_forward
conv2d_backward = backend.conv2d_backward
grid_step_forward = backend.grid_step_forward
grid_step_backward = backend.grid_step_backward

__all__ = [
    "BACKEND_NAME",
    "backend",
    "numpy_backend",
    "conv2d_forward",
    "conv2d_backward",
    "grid_step_forward",
    "grid_step_backward",
]
