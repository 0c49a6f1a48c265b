# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twins of the numpy reference kernels.

Loop order matches _ref accumulation exactly and the extension is built
with fp-contract disabled, so float results are bit-identical to the
fallback backend.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor

from ._ref import DCT_T32

cnp.import_array()

BACKEND_NAME = "compiled"

cdef cnp.float64_t[:, ::1] _DCT_T = np.ascontiguousarray(DCT_T32)


def levenshtein(str a, str b):
    if a == b:
        return 0
    cdef Py_ssize_t la = len(a), lb = len(b)
    if la == 0:
        return lb
    if lb == 0:
        return la
    cdef cnp.ndarray[cnp.int32_t, ndim=1] ca = np.array([ord(c) for c in a], dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] cb = np.array([ord(c) for c in b], dtype=np.int32)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] prev = np.arange(lb + 1, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] cur = np.zeros(lb + 1, dtype=np.int64)
    cdef Py_ssize_t i, j
    cdef long cost, best, v
    for i in range(1, la + 1):
        cur[0] = i
        for j in range(1, lb + 1):
            cost = 0 if ca[i - 1] == cb[j - 1] else 1
            best = prev[j] + 1
            v = cur[j - 1] + 1
            if v < best:
                best = v
            v = prev[j - 1] + cost
            if v < best:
                best = v
            cur[j] = best
        prev, cur = cur, prev
    return int(prev[lb])


def hamming_distances(hashes, probe):
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] h = np.ascontiguousarray(hashes, dtype=np.uint64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.empty(h.shape[0], dtype=np.int64)
    cdef unsigned long long p = <unsigned long long> int(probe)
    cdef unsigned long long x
    cdef Py_ssize_t i
    cdef int c
    for i in range(h.shape[0]):
        x = h[i] ^ p
        c = 0
        while x:
            x &= x - 1
            c += 1
        out[i] = c
    return out


def bilinear_resize(img, Py_ssize_t out_h, Py_ssize_t out_w):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] src = np.ascontiguousarray(img, dtype=np.float64)
    cdef Py_ssize_t h = src.shape[0], w = src.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((out_h, out_w), dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] y0 = np.empty(out_h, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] y1 = np.empty(out_h, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] fy = np.empty(out_h, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] x0 = np.empty(out_w, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] x1 = np.empty(out_w, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] fx = np.empty(out_w, dtype=np.float64)
    cdef Py_ssize_t i, jj
    cdef double s, f0
    cdef long q
    for i in range(out_h):
        s = (i + 0.5) * (h / <double> out_h) - 0.5
        f0 = floor(s)
        fy[i] = s - f0
        q = <long> f0
        y0[i] = q if q >= 0 else 0
        if y0[i] > h - 1:
            y0[i] = h - 1
        q = q + 1
        y1[i] = q if q >= 0 else 0
        if y1[i] > h - 1:
            y1[i] = h - 1
    for jj in range(out_w):
        s = (jj + 0.5) * (w / <double> out_w) - 0.5
        f0 = floor(s)
        fx[jj] = s - f0
        q = <long> f0
        x0[jj] = q if q >= 0 else 0
        if x0[jj] > w - 1:
            x0[jj] = w - 1
        q = q + 1
        x1[jj] = q if q >= 0 else 0
        if x1[jj] > w - 1:
            x1[jj] = w - 1
    cdef double t0, t1
    for i in range(out_h):
        for jj in range(out_w):
            # same expression tree as the reference: vertical lerp per
            # column, then horizontal lerp
            t0 = (1.0 - fy[i]) * src[y0[i], x0[jj]] + fy[i] * src[y1[i], x0[jj]]
            t1 = (1.0 - fy[i]) * src[y0[i], x1[jj]] + fy[i] * src[y1[i], x1[jj]]
            out[i, jj] = (1.0 - fx[jj]) * t0 + fx[jj] * t1
    return out


def dct2_32(block):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] b = np.ascontiguousarray(block, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] tb = np.zeros((32, 32), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((32, 32), dtype=np.float64)
    cdef cnp.float64_t[:, ::1] t = _DCT_T
    cdef Py_ssize_t u, v, x, j
    for x in range(32):
        for u in range(32):
            for j in range(32):
                tb[u, j] = tb[u, j] + t[u, x] * b[x, j]
    for j in range(32):
        for u in range(32):
            for v in range(32):
                out[u, v] = out[u, v] + tb[u, j] * t[v, j]
    return out


def blur_valid(img, win):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] src = np.ascontiguousarray(img, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] w = np.ascontiguousarray(win, dtype=np.float64)
    cdef Py_ssize_t k = w.shape[0]
    cdef Py_ssize_t h = src.shape[0], width = src.shape[1]
    cdef Py_ssize_t oh = h - k + 1, ow = width - k + 1
    cdef cnp.ndarray[cnp.float64_t, ndim=2] v = np.zeros((oh, width), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((oh, ow), dtype=np.float64)
    cdef Py_ssize_t t, i, j
    for t in range(k):
        for i in range(oh):
            for j in range(width):
                v[i, j] = v[i, j] + w[t] * src[t + i, j]
    for t in range(k):
        for i in range(oh):
            for j in range(ow):
                out[i, j] = out[i, j] + w[t] * v[i, t + j]
    return out


def ssim_map_from_stats(a, mu_a, saa, b, mu_b, sbb, win, double c1, double c2):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] aa = np.ascontiguousarray(a, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] bb = np.ascontiguousarray(b, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] ma = np.ascontiguousarray(mu_a, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] mb = np.ascontiguousarray(mu_b, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] qa = np.ascontiguousarray(saa, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] qb = np.ascontiguousarray(sbb, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] sab = blur_valid(np.multiply(aa, bb), win)
    cdef Py_ssize_t h = ma.shape[0], ww = ma.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((h, ww), dtype=np.float64)
    cdef Py_ssize_t i, j
    cdef double va, vb, cov, num, den
    for i in range(h):
        for j in range(ww):
            va = qa[i, j] - ma[i, j] * ma[i, j]
            vb = qb[i, j] - mb[i, j] * mb[i, j]
            cov = sab[i, j] - ma[i, j] * mb[i, j]
            num = (2.0 * ma[i, j] * mb[i, j] + c1) * (2.0 * cov + c2)
            den = (ma[i, j] * ma[i, j] + mb[i, j] * mb[i, j] + c1) * (va + vb + c2)
            out[i, j] = num / den
    return out


def ssim_map(a, b, win, double c1, double c2):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] aa = np.ascontiguousarray(a, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] bb = np.ascontiguousarray(b, dtype=np.float64)
    mu_a = blur_valid(aa, win)
    mu_b = blur_valid(bb, win)
    saa = blur_valid(np.multiply(aa, aa), win)
    sbb = blur_valid(np.multiply(bb, bb), win)
    return ssim_map_from_stats(aa, mu_a, saa, bb, mu_b, sbb, win, c1, c2)
