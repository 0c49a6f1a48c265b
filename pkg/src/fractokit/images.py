"""8-bit grayscale image carrier and PNG I/O.

Images are 2-D uint8 numpy arrays throughout the toolkit. Colour inputs
are converted at load time with Rec.601 luma weights (0.299, 0.587, 0.114).
"""

from pathlib import Path

import numpy as np
from PIL import Image

#: Alias for the grayscale carrier: 2-D uint8 array, shape (height, width).
GrayImage = np.ndarray

_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float64)


def ensure_gray(img: np.ndarray) -> np.ndarray:
    if not isinstance(img, np.ndarray) or img.ndim != 2 or img.dtype != np.uint8:
        raise TypeError("expected a 2-D uint8 grayscale array")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError("image must be at least 1x1")
    return img


def rgb_to_gray(rgb: np.ndarray) -> GrayImage:
    """Rec.601 luma conversion, rounded to nearest (ties to even)."""
    vals = np.asarray(rgb, dtype=np.float64)[..., :3] @ _LUMA
    return np.clip(np.rint(vals), 0, 255).astype(np.uint8)


def quantize(img: np.ndarray) -> GrayImage:
    """Round a float image half-up and clip into the 8-bit range."""
    return np.clip(np.floor(np.asarray(img, dtype=np.float64) + 0.5), 0, 255).astype(np.uint8)


def load_gray(path) -> GrayImage:
    with Image.open(path) as im:
        if im.mode == "L":
            arr = np.asarray(im, dtype=np.uint8)
        else:
            arr = rgb_to_gray(np.asarray(im.convert("RGB")))
    return ensure_gray(arr)


def save_gray(path, img: GrayImage) -> None:
    ensure_gray(img)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(img, mode="L").save(path, format="PNG")
