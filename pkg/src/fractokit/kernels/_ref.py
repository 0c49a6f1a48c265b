"""Numpy reference implementations of the hot kernels.

This is the fallback backend used when the compiled extension is not
available. Float kernels accumulate in a fixed order (explicit loops over
taps / basis rows instead of BLAS calls) so the compiled twin, built with
fp-contract disabled, produces bit-identical output.
"""

import numpy as np

BACKEND_NAME = "numpy"

_POP8 = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint8)


def _dct_basis(n: int) -> np.ndarray:
    u = np.arange(n, dtype=np.float64)[:, None]
    x = np.arange(n, dtype=np.float64)[None, :]
    t = np.cos(np.pi * (2.0 * x + 1.0) * u / (2.0 * n))
    t[0, :] *= np.sqrt(1.0 / n)
    t[1:, :] *= np.sqrt(2.0 / n)
    return t


#: Orthonormal DCT-II basis for the 32x32 hash block, shared by both backends.
DCT_T32 = _dct_basis(32)


def gaussian_kernel(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    """Normalised 1-D Gaussian window (separable 2-D use)."""
    off = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    w = np.exp(-(off * off) / (2.0 * sigma * sigma))
    return w / w.sum()


def levenshtein(a: str, b: str) -> int:
    """Edit distance via the two-row dynamic program."""
    if a == b:
        return 0
    la, lb = len(a), len(b)
    if la == 0:
        return lb
    if lb == 0:
        return la
    prev = list(range(lb + 1))
    cur = [0] * (lb + 1)
    for i in range(1, la + 1):
        cur[0] = i
        ca = a[i - 1]
        for j in range(1, lb + 1):
            cost = 0 if ca == b[j - 1] else 1
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
        prev, cur = cur, prev
    return prev[lb]


def hamming_distances(hashes: np.ndarray, probe: int) -> np.ndarray:
    """Popcount of hashes XOR probe, for a uint64 vector."""
    x = np.bitwise_xor(np.ascontiguousarray(hashes, dtype=np.uint64), np.uint64(probe))
    return _POP8[x.view(np.uint8).reshape(-1, 8)].sum(axis=1, dtype=np.int64)


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample with pixel-center alignment, clamped at borders.

    Source coordinate of output pixel d is (d + 0.5) * (in / out) - 0.5.
    """
    img = np.ascontiguousarray(img, dtype=np.float64)
    h, w = img.shape
    sy = (np.arange(out_h, dtype=np.float64) + 0.5) * (h / out_h) - 0.5
    sx = (np.arange(out_w, dtype=np.float64) + 0.5) * (w / out_w) - 0.5
    y0f = np.floor(sy)
    x0f = np.floor(sx)
    fy = sy - y0f
    fx = sx - x0f
    y0 = np.clip(y0f.astype(np.int64), 0, h - 1)
    y1 = np.clip(y0f.astype(np.int64) + 1, 0, h - 1)
    x0 = np.clip(x0f.astype(np.int64), 0, w - 1)
    x1 = np.clip(x0f.astype(np.int64) + 1, 0, w - 1)
    # Vertical pass then horizontal pass; the compiled twin evaluates the
    # same expression tree per output element.
    rows0 = img[y0, :]
    rows1 = img[y1, :]
    tmp = (1.0 - fy)[:, None] * rows0 + fy[:, None] * rows1
    out = (1.0 - fx)[None, :] * tmp[:, x0] + fx[None, :] * tmp[:, x1]
    return out


def dct2_32(block: np.ndarray) -> np.ndarray:
    """Orthonormal 2-D DCT-II of a 32x32 block: T @ block @ T'.

    Accumulates over the contraction index in ascending order.
    """
    t = DCT_T32
    block = np.ascontiguousarray(block, dtype=np.float64)
    tb = np.zeros((32, 32), dtype=np.float64)
    for x in range(32):
        tb += t[:, x : x + 1] * block[x : x + 1, :]
    out = np.zeros((32, 32), dtype=np.float64)
    for j in range(32):
        out += tb[:, j : j + 1] * t[:, j : j + 1].T
    return out


def blur_valid(img: np.ndarray, win: np.ndarray) -> np.ndarray:
    """Separable valid-mode convolution with a symmetric 1-D window."""
    img = np.ascontiguousarray(img, dtype=np.float64)
    k = win.shape[0]
    h, w = img.shape
    v = np.zeros((h - k + 1, w), dtype=np.float64)
    for t in range(k):
        v += win[t] * img[t : t + h - k + 1, :]
    out = np.zeros((h - k + 1, w - k + 1), dtype=np.float64)
    for t in range(k):
        out += win[t] * v[:, t : t + w - k + 1]
    return out


def ssim_map_from_stats(a, mu_a, saa, b, mu_b, sbb, win, c1: float, c2: float) -> np.ndarray:
    """SSIM map given precomputed means and smoothed squares per side.

    Precomputing the single-image blurs lets a retrieval loop pay for only
    one convolution (the cross term) per candidate pair.
    """
    sab = blur_valid(np.ascontiguousarray(a, np.float64) * np.ascontiguousarray(b, np.float64), win)
    va = saa - mu_a * mu_a
    vb = sbb - mu_b * mu_b
    cov = sab - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2)
    return num / den


def ssim_map(a: np.ndarray, b: np.ndarray, win: np.ndarray, c1: float, c2: float) -> np.ndarray:
    """Per-window SSIM over valid positions of the Gaussian window."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    mu_a = blur_valid(a, win)
    mu_b = blur_valid(b, win)
    saa = blur_valid(a * a, win)
    sbb = blur_valid(b * b, win)
    return ssim_map_from_stats(a, mu_a, saa, b, mu_b, sbb, win, c1, c2)
