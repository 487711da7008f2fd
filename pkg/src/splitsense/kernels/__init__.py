"""Conv window gather/scatter kernels with a compiled core and numpy fallback.

The compiled extension is preferred when importable; set
``SPLITSENSE_BACKEND=numpy`` (or ``cython``) to force a backend. Both
backends implement the same band-of-rows API over channels-last samples so
the conv layers can tile work into cache-resident column chunks.
"""

from __future__ import annotations

import os

import numpy as np

from . import _convops_np

_FORCED = os.environ.get("SPLITSENSE_BACKEND", "auto").lower()
_ext = None
if _FORCED in ("auto", "cython"):
    try:
        from . import _convops as _ext
    except ImportError:
        _ext = None
        if _FORCED == "cython":
            raise ImportError(
                "SPLITSENSE_BACKEND=cython but the compiled extension is "
                "not available; reinstall with Cython present"
            )


def backend_name() -> str:
    return "cython" if _ext is not None else "numpy"


def im2col_rows(x: np.ndarray, k: int, stride: int, pad: int, i0: int,
                i1: int, out: np.ndarray) -> np.ndarray:
    """Gather conv windows for output rows [i0, i1) of an (H, W, C) sample.

    ``out`` must be ((i1-i0)*ow, k*k*C); cells sourced from the zero
    padding are zero-filled. Returns ``out``.
    """
    if _ext is not None:
        _ext.im2col_rows(x, k, stride, pad, i0, i1, out)
    else:
        _convops_np.im2col_rows(x, k, stride, pad, i0, i1, out)
    return out


def col2im_rows(cols: np.ndarray, k: int, stride: int, pad: int, i0: int,
                i1: int, out: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`im2col_rows`: scatter-add a band of window rows
    onto an (H, W, C) grid, dropping contributions outside it."""
    if _ext is not None:
        _ext.col2im_rows(cols, k, stride, pad, i0, i1, out)
    else:
        _convops_np.col2im_rows(cols, k, stride, pad, i0, i1, out)
    return cols
