# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""C kernels for conv window gather/scatter on channels-last activations.

One call handles a band of window rows [i0, i1) of a single (H, W, C)
sample, so the caller can tile work to keep the column matrix cache
resident while streaming GEMMs over it.

Zero padding is fused: im2col zero-fills cells whose source falls outside
the image; col2im drops contributions landing outside it (the crop
semantics the conv and transposed-conv layers need on both forward and
gradient paths).

Column matrix layout: row (i - i0)*ow + j holds the window at output pixel
(i, j); within a row, cells are ordered (ki, kj, c) with c fastest, i.e.
contiguous channel runs.
"""

from libc.string cimport memcpy, memset

ctypedef fused real:
    float
    double


def im2col_rows(real[:, :, ::1] x, Py_ssize_t k, Py_ssize_t stride,
                Py_ssize_t pad, Py_ssize_t i0, Py_ssize_t i1,
                real[:, ::1] out):
    """Gather windows for output rows [i0, i1) of one (H, W, C) sample."""
    cdef Py_ssize_t H = x.shape[0], W = x.shape[1], C = x.shape[2]
    cdef Py_ssize_t ow = (W + 2 * pad - k) // stride + 1
    cdef real *xb = &x[0, 0, 0]
    cdef real *ob = &out[0, 0]
    cdef Py_ssize_t K = k * k * C
    cdef Py_ssize_t i, j, ki, kj, r, c0, m
    cdef real *dst
    cdef real *src
    for i in range(i0, i1):
        for ki in range(k):
            r = i * stride + ki - pad
            dst = ob + (i - i0) * ow * K + ki * k * C
            if r < 0 or r >= H:
                for j in range(ow):
                    memset(dst + j * K, 0, k * C * sizeof(real))
                continue
            for j in range(ow):
                src = xb + r * W * C
                for kj in range(k):
                    c0 = j * stride + kj - pad
                    if c0 < 0 or c0 >= W:
                        memset(dst + j * K + kj * C, 0, C * sizeof(real))
                    else:
                        memcpy(dst + j * K + kj * C, src + c0 * C,
                               C * sizeof(real))


def col2im_rows(real[:, ::1] cols, Py_ssize_t k, Py_ssize_t stride,
                Py_ssize_t pad, Py_ssize_t i0, Py_ssize_t i1,
                real[:, :, ::1] out):
    """Adjoint of :func:`im2col_rows`: scatter-add onto one (H, W, C) grid."""
    cdef Py_ssize_t H = out.shape[0], W = out.shape[1], C = out.shape[2]
    cdef Py_ssize_t ow = (W + 2 * pad - k) // stride + 1
    cdef real *cb = &cols[0, 0]
    cdef real *ob = &out[0, 0, 0]
    cdef Py_ssize_t K = k * k * C
    cdef Py_ssize_t i, j, ki, kj, r, c0, c
    cdef real *src
    cdef real *dst
    for i in range(i0, i1):
        for ki in range(k):
            r = i * stride + ki - pad
            if r < 0 or r >= H:
                continue
            for j in range(ow):
                src = cb + (i - i0) * ow * K + ki * k * C + j * K
                dst = ob + r * W * C
                for kj in range(k):
                    c0 = j * stride + kj - pad
                    if c0 < 0 or c0 >= W:
                        continue
                    for c in range(C):
                        dst[c0 * C + c] += src[kj * C + c]
