# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled raster hot paths: RLE codec, disk rasterization, mask overlap.

Bit-compatible with clickseg._kernels._pyraster; the backend is chosen
once at package import.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"


def rle_encode(mask):
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] flat = np.ascontiguousarray(
        np.asarray(mask, dtype=np.uint8).ravel(order="F"))
    cdef Py_ssize_t n = flat.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    out = np.empty(n + 1, dtype=np.int64)
    cdef cnp.int64_t[:] runs = out
    cdef Py_ssize_t i, k = 0
    cdef cnp.uint8_t cur = 0
    cdef cnp.int64_t run = 0
    for i in range(n):
        if flat[i] == cur:
            run += 1
        else:
            runs[k] = run
            k += 1
            cur = flat[i]
            run = 1
    runs[k] = run
    k += 1
    return out[:k].copy()


def rle_decode(counts, int height, int width):
    cdef cnp.ndarray[cnp.int64_t, ndim=1] c = np.ascontiguousarray(
        np.asarray(counts, dtype=np.int64))
    cdef Py_ssize_t total = 0, i
    for i in range(c.shape[0]):
        total += c[i]
    if total != <Py_ssize_t> height * width:
        raise ValueError(
            f"run lengths sum to {total}, expected {height * width}")
    flat = np.zeros(height * width, dtype=np.uint8)
    cdef cnp.uint8_t[:] f = flat
    cdef Py_ssize_t pos = 0, j
    cdef int value = 0
    for i in range(c.shape[0]):
        if value:
            for j in range(pos, pos + c[i]):
                f[j] = 1
        pos += c[i]
        value ^= 1
    return flat.reshape((width, height)).T.copy()


def disk_map(rows, cols, int height, int width, int radius):
    cdef cnp.ndarray[cnp.int64_t, ndim=1] rr = np.ascontiguousarray(
        np.asarray(rows, dtype=np.int64))
    cdef cnp.ndarray[cnp.int64_t, ndim=1] cc = np.ascontiguousarray(
        np.asarray(cols, dtype=np.int64))
    out = np.zeros((height, width), dtype=np.uint8)
    cdef cnp.uint8_t[:, :] o = out
    cdef Py_ssize_t k, r, c
    cdef long cr, ccol, r0, r1, c0, c1, dy, dx, r2 = radius * radius
    for k in range(rr.shape[0]):
        cr = rr[k]
        ccol = cc[k]
        r0 = max(0, cr - radius)
        r1 = min(height, cr + radius + 1)
        c0 = max(0, ccol - radius)
        c1 = min(width, ccol + radius + 1)
        for r in range(r0, r1):
            dy = r - cr
            for c in range(c0, c1):
                dx = c - ccol
                if dy * dy + dx * dx <= r2:
                    o[r, c] = 1
    return out


def mask_intersection_union(a, b):
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] fa = np.ascontiguousarray(
        np.asarray(a, dtype=np.uint8).ravel())
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] fb = np.ascontiguousarray(
        np.asarray(b, dtype=np.uint8).ravel())
    cdef Py_ssize_t i, inter = 0, union = 0
    for i in range(fa.shape[0]):
        if fa[i] and fb[i]:
            inter += 1
        if fa[i] or fb[i]:
            union += 1
    return inter, union
