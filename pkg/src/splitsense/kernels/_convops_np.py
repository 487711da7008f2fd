"""Pure-numpy fallback for the conv window gather/scatter kernels.

Bitwise-identical semantics to the compiled extension: channels-last
(H, W, C) samples, window-row bands [i0, i1), fused zero padding on
gather and fused crop (contribution dropping) on scatter. Column rows
are ordered (i, j) with cells (ki, kj, c), c fastest.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col_rows(x: np.ndarray, k: int, stride: int, pad: int, i0: int,
                i1: int, out: np.ndarray) -> None:
    H, W, C = x.shape
    ow = (W + 2 * pad - k) // stride + 1
    rows = i1 - i0
    r_lo = i0 * stride - pad
    r_hi = (i1 - 1) * stride + k - 1 - pad
    pad_top = max(0, -r_lo)
    pad_bot = max(0, r_hi - (H - 1))
    band = x[max(r_lo, 0):min(r_hi, H - 1) + 1]
    band = np.pad(band, ((pad_top, pad_bot), (pad, pad), (0, 0)))
    win = sliding_window_view(band, (k, k), axis=(0, 1))[::stride, ::stride]
    # (rows, ow, C, k, k) -> (rows, ow, k, k, C) flattened into `out`
    out.reshape(rows, ow, k, k, C)[...] = win.transpose(0, 1, 3, 4, 2)


def col2im_rows(cols: np.ndarray, k: int, stride: int, pad: int, i0: int,
                i1: int, out: np.ndarray) -> None:
    H, W, C = out.shape
    ow = (W + 2 * pad - k) // stride + 1
    rows = i1 - i0
    c6 = cols.reshape(rows, ow, k, k, C)
    for ki in range(k):
        for kj in range(k):
            # target rows/cols of this tap; clip to the unpadded grid
            r = np.arange(i0, i1) * stride + ki - pad
            keep_r = (r >= 0) & (r < H)
            c = np.arange(ow) * stride + kj - pad
            keep_c = (c >= 0) & (c < W)
            if not keep_r.any() or not keep_c.any():
                continue
            out[np.ix_(r[keep_r], c[keep_c])] += \
                c6[keep_r][:, keep_c, ki, kj]
