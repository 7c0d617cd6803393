# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled im2col/col2im for float64 NCHW arrays."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


cpdef Py_ssize_t out_size(Py_ssize_t n, Py_ssize_t k, Py_ssize_t stride, Py_ssize_t pad):
    return (n + 2 * pad - k) // stride + 1


cdef inline void _span(Py_ssize_t j, Py_ssize_t stride, Py_ssize_t pad, Py_ssize_t w, Py_ssize_t ow,
                       Py_ssize_t* lo, Py_ssize_t* hi) nogil:
    # output columns xx in [lo, hi) read inside the image: 0 <= xx*stride + j - pad < w
    cdef Py_ssize_t a = pad - j
    lo[0] = 0 if a <= 0 else (a + stride - 1) // stride
    hi[0] = (w - 1 - j + pad) // stride + 1 if w - 1 - j + pad >= 0 else 0
    if hi[0] > ow:
        hi[0] = ow
    if lo[0] > hi[0]:
        lo[0] = hi[0]


def im2col(x, Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t stride, Py_ssize_t pad):
    cdef double[:, :, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], c = xv.shape[1], h = xv.shape[2], w = xv.shape[3]
    cdef Py_ssize_t oh = out_size(h, kh, stride, pad), ow = out_size(w, kw, stride, pad)
    out = np.empty((n, c * kh * kw, oh * ow), dtype=np.float64)
    cdef double[:, :, ::1] ov = out
    cdef Py_ssize_t b, ch, i, j, y, xx, iy, row, lo, hi, base, src
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(kh):
                    for j in range(kw):
                        row = (ch * kh + i) * kw + j
                        _span(j, stride, pad, w, ow, &lo, &hi)
                        for y in range(oh):
                            iy = y * stride + i - pad
                            base = y * ow
                            if iy < 0 or iy >= h:
                                for xx in range(ow):
                                    ov[b, row, base + xx] = 0.0
                                continue
                            for xx in range(lo):
                                ov[b, row, base + xx] = 0.0
                            src = lo * stride + j - pad
                            for xx in range(lo, hi):
                                ov[b, row, base + xx] = xv[b, ch, iy, src]
                                src += stride
                            for xx in range(hi, ow):
                                ov[b, row, base + xx] = 0.0
    return out


def col2im(cols, shape, Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t stride, Py_ssize_t pad):
    cdef Py_ssize_t n = shape[0], c = shape[1], h = shape[2], w = shape[3]
    cdef Py_ssize_t oh = out_size(h, kh, stride, pad), ow = out_size(w, kw, stride, pad)
    cdef double[:, :, ::1] cv = np.ascontiguousarray(cols, dtype=np.float64).reshape(n, c * kh * kw, oh * ow)
    out = np.zeros((n, c, h, w), dtype=np.float64)
    cdef double[:, :, :, ::1] ov = out
    cdef Py_ssize_t b, ch, i, j, y, xx, iy, row, lo, hi, base, dst
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(kh):
                    for j in range(kw):
                        row = (ch * kh + i) * kw + j
                        _span(j, stride, pad, w, ow, &lo, &hi)
                        for y in range(oh):
                            iy = y * stride + i - pad
                            if iy < 0 or iy >= h:
                                continue
                            base = y * ow
                            dst = lo * stride + j - pad
                            for xx in range(lo, hi):
                                ov[b, ch, iy, dst] += cv[b, row, base + xx]
                                dst += stride
    return out
