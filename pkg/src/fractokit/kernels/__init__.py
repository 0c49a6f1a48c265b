"""Kernel backend selection.

The compiled Cython extension is preferred when importable; otherwise the
numpy reference backend is used. Both expose the same functions with
identical numerical results. Set FRACTOKIT_KERNELS=numpy or =compiled to
force a backend (the latter raises if the extension is missing).
"""

import os

from ._ref import DCT_T32, gaussian_kernel  # shared constants/helpers

_forced = os.environ.get("FRACTOKIT_KERNELS", "").strip().lower()

if _forced == "numpy":
    from . import _ref as _impl
elif _forced == "compiled":
    from . import _fast as _impl  # type: ignore[no-redef]
else:
    try:
        from . import _fast as _impl  # type: ignore[no-redef]
    except ImportError:
        from . import _ref as _impl

BACKEND_NAME = _impl.BACKEND_NAME
levenshtein = _impl.levenshtein
hamming_distances = _impl.hamming_distances
bilinear_resize = _impl.bilinear_resize
dct2_32 = _impl.dct2_32
blur_valid = _impl.blur_valid
ssim_map = _impl.ssim_map
ssim_map_from_stats = _impl.ssim_map_from_stats

__all__ = [
    "BACKEND_NAME",
    "DCT_T32",
    "gaussian_kernel",
    "levenshtein",
    "hamming_distances",
    "bilinear_resize",
    "dct2_32",
    "blur_valid",
    "ssim_map",
    "ssim_map_from_stats",
]
