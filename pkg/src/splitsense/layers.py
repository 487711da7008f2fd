"""Forward/backward primitives for the convolutional VAE.

Spatial ops run on channels-last activations (N, H, W, C): conv windows
then gather into contiguous channel runs, the im2col GEMM runs in its fast
(rows >> cols) orientation, bias/activation broadcast over the trailing
axis, and the bottleneck flatten is a free reshape. Weights keep the
public (C_out, C_in, k, k) / (C_in, C_out, k, k) layout and are repacked
per call (they are tiny next to the activations).

Work is tiled into bands of window rows so the column matrix of each GEMM
stays cache resident instead of round-tripping ~100 MB through memory.

Everything is dtype-generic over float32/float64 so the same code path
serves fast training and 64-bit finite-difference checks.
"""

from __future__ import annotations

import numpy as np

from . import kernels

# per-chunk column-matrix budget; small enough for typical L2/L3 caches
_CHUNK_BYTES = 1 << 21


def _chunk_rows(ow: int, cells: int, itemsize: int) -> int:
    per_row = ow * cells * itemsize
    return max(1, _CHUNK_BYTES // max(per_row, 1))


def conv_out_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 2,
           pad: int = 1):
    """Strided convolution. x: (N, H, W, C_in); w: (C_out, C_in, k, k).

    Returns (y, cache); y is (N, oh, ow, C_out).
    """
    n, h, wd, c_in = x.shape
    c_out, _, k, _ = w.shape
    oh = conv_out_size(h, k, stride, pad)
    ow = conv_out_size(wd, k, stride, pad)
    cells = k * k * c_in
    w2 = np.ascontiguousarray(w.transpose(2, 3, 1, 0).reshape(cells, c_out))
    y = np.empty((n, oh, ow, c_out), dtype=x.dtype)
    rows = _chunk_rows(ow, cells, x.itemsize)
    buf = np.empty((rows * ow, cells), dtype=x.dtype)
    for s in range(n):
        for i0 in range(0, oh, rows):
            i1 = min(i0 + rows, oh)
            m = (i1 - i0) * ow
            cols = kernels.im2col_rows(x[s], k, stride, pad, i0, i1, buf[:m])
            np.matmul(cols, w2, out=y[s, i0:i1].reshape(m, c_out))
    y += b
    cache = (x, w2, stride, pad, oh, ow)
    return y, cache


def conv2d_backward(dy: np.ndarray, w: np.ndarray, cache, need_dx: bool = True):
    x, w2, stride, pad, oh, ow = cache
    n, h, wd, c_in = x.shape
    c_out, _, k, _ = w.shape
    cells = k * k * c_in
    db = dy.sum(axis=(0, 1, 2))
    dw2 = np.zeros((cells, c_out), dtype=dy.dtype)
    dx = np.zeros_like(x) if need_dx else None
    rows = _chunk_rows(ow, cells, x.itemsize)
    buf = np.empty((rows * ow, cells), dtype=x.dtype)
    for s in range(n):
        for i0 in range(0, oh, rows):
            i1 = min(i0 + rows, oh)
            m = (i1 - i0) * ow
            cols = kernels.im2col_rows(x[s], k, stride, pad, i0, i1, buf[:m])
            dy2 = dy[s, i0:i1].reshape(m, c_out)
            dw2 += cols.T @ dy2
            if need_dx:
                dcols = dy2 @ w2.T
                kernels.col2im_rows(dcols, k, stride, pad, i0, i1, dx[s])
    dw = np.ascontiguousarray(
        dw2.reshape(k, k, c_in, c_out).transpose(3, 2, 0, 1))
    return dx, dw, db


def conv_transpose2d(x: np.ndarray, w: np.ndarray, b: np.ndarray,
                     stride: int = 2, pad: int = 1, out_pad: int = 1):
    """Transposed convolution. x: (N, h, w, C_in); w: (C_in, C_out, k, k).

    Output spatial size is (h-1)*stride - 2*pad + k + out_pad.
    """
    n, h, wd, c_in = x.shape
    _, c_out, k, _ = w.shape
    ho = (h - 1) * stride - 2 * pad + k + out_pad
    wo = (wd - 1) * stride - 2 * pad + k + out_pad
    cells = k * k * c_out
    v = np.ascontiguousarray(w.transpose(2, 3, 1, 0).reshape(cells, c_in))
    y = np.zeros((n, ho, wo, c_out), dtype=x.dtype)
    rows = _chunk_rows(wd, cells, x.itemsize)
    for s in range(n):
        for i0 in range(0, h, rows):
            i1 = min(i0 + rows, h)
            m = (i1 - i0) * wd
            cols = x[s, i0:i1].reshape(m, c_in) @ v.T
            kernels.col2im_rows(cols, k, stride, pad, i0, i1, y[s])
    y += b
    cache = (x, v, stride, pad, ho, wo)
    return y, cache


def conv_transpose2d_backward(dy: np.ndarray, w: np.ndarray, cache,
                              need_dx: bool = True):
    x, v, stride, pad, ho, wo = cache
    n, h, wd, c_in = x.shape
    _, c_out, k, _ = w.shape
    cells = k * k * c_out
    db = dy.sum(axis=(0, 1, 2))
    dv = np.zeros((cells, c_in), dtype=dy.dtype)
    dx = np.empty_like(x) if need_dx else None
    rows = _chunk_rows(wd, cells, x.itemsize)
    buf = np.empty((rows * wd, cells), dtype=x.dtype)
    for s in range(n):
        for i0 in range(0, h, rows):
            i1 = min(i0 + rows, h)
            m = (i1 - i0) * wd
            # windows of the upstream grad visit exactly the input grid
            dcols = kernels.im2col_rows(dy[s], k, stride, pad, i0, i1, buf[:m])
            x2 = x[s, i0:i1].reshape(m, c_in)
            dv += dcols.T @ x2
            if need_dx:
                np.matmul(dcols, v, out=dx[s, i0:i1].reshape(m, c_in))
    dw = np.ascontiguousarray(
        dv.reshape(k, k, c_out, c_in).transpose(3, 2, 0, 1))
    return dx, dw, db


def linear(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Affine map. x: (N, F_in); w: (F_out, F_in)."""
    return x @ w.T + b


def linear_backward(dy: np.ndarray, x: np.ndarray, w: np.ndarray):
    dx = dy @ w
    dw = dy.T @ x
    db = dy.sum(axis=0)
    return dx, dw, db


def relu(x: np.ndarray) -> np.ndarray:
    """Rectify in place (callers always pass a freshly built activation)."""
    return np.maximum(x, 0, out=x)


def relu_backward(dy: np.ndarray, post: np.ndarray) -> np.ndarray:
    return dy * (post > 0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Logistic function in place (callers pass a fresh activation)."""
    # exp overflow for very negative inputs saturates cleanly to 0.
    np.negative(x, out=x)
    with np.errstate(over="ignore"):
        np.exp(x, out=x)
    x += x.dtype.type(1)
    return np.reciprocal(x, out=x)


def sigmoid_backward(dy: np.ndarray, post: np.ndarray) -> np.ndarray:
    return dy * post * (1.0 - post)
