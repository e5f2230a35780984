"""Image ingest: decode PNG/JPEG files into unit-interval grayscale arrays.

A grayscale image is represented throughout the pipeline as a float64
H x W numpy array with every intensity in [0, 1] and H, W >= 9 (the
filter bank needs room for a 7x7 window plus the horizontal product
shift). ``require_gray`` enforces these invariants at entry points.
"""

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ImageTooSmallError, ShapeMismatchError, UnsupportedFormatError

MIN_SIDE = 9

# Rec. 601 luma weights; they sum to exactly 1 so [0,1]^3 maps into [0,1].
LUMA_R = 0.299
LUMA_G = 0.587
LUMA_B = 0.114

_ALLOWED_PIL_FORMATS = {"PNG", "JPEG"}


def to_gray(r, g, b):
    """Rec. 601 luma of unit-interval RGB values."""
    return LUMA_R * r + LUMA_G * g + LUMA_B * b


def require_gray(img):
    """Validate a grayscale array; returns it as float64.

    Raises ImageTooSmallError below 9x9 and ShapeMismatchError / ValueError
    for non-2D input or out-of-range intensities.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeMismatchError(f"expected a 2-D grayscale array, got shape {arr.shape}")
    h, w = arr.shape
    if h < MIN_SIDE or w < MIN_SIDE:
        raise ImageTooSmallError(f"image is {h}x{w}, minimum is {MIN_SIDE}x{MIN_SIDE}")
    if not np.isfinite(arr).all():
        raise ValueError("image contains non-finite intensities")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("intensities outside [0, 1]")
    return arr


def load_image(path):
    """Load a PNG or JPEG file as a unit-interval grayscale float64 array.

    Color images are converted with Rec. 601 luma weights. 8-bit samples
    are divided by 255, 16-bit samples by 65535.
    """
    try:
        with Image.open(path) as im:
            if im.format not in _ALLOWED_PIL_FORMATS:
                raise UnsupportedFormatError(
                    f"{path}: format {im.format!r} not supported (PNG and JPEG only)"
                )
            im.load()
            gray = _pil_to_gray(im)
    except UnidentifiedImageError as exc:
        raise UnsupportedFormatError(f"{path}: not a decodable image") from exc
    return require_gray(gray)


def _pil_to_gray(im):
    mode = im.mode
    if mode in ("L", "P"):
        if mode == "P":
            im = im.convert("RGB")
            return _rgb_to_gray(np.asarray(im, dtype=np.float64) / 255.0)
        return np.asarray(im, dtype=np.float64) / 255.0
    if mode in ("I;16", "I;16B", "I;16L"):
        return np.asarray(im, dtype=np.float64) / 65535.0
    if mode == "I":
        # 32-bit integer PNGs hold 16-bit samples in practice
        return np.asarray(im, dtype=np.float64) / 65535.0
    if mode in ("RGB", "RGBA", "LA"):
        if mode != "RGB":
            im = im.convert("RGB")
        return _rgb_to_gray(np.asarray(im, dtype=np.float64) / 255.0)
    raise UnsupportedFormatError(f"unsupported pixel mode {mode!r}")


def _rgb_to_gray(rgb):
    return to_gray(rgb[..., 0], rgb[..., 1], rgb[..., 2])


def save_gray_png(img, path):
    """Write a grayscale array as an 8-bit PNG (round-half-away quantization)."""
    arr = require_gray(img)
    q = np.floor(arr * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(q, mode="L").save(path, format="PNG")
