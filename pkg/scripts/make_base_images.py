#!/usr/bin/env python3
"""Regenerate the bundled base images under src/lensqc/data/bases/.

Exports a fixed set of freely licensed sample photographs from
scikit-image's bundled data (public domain / CC0), converted to
grayscale and downscaled so the long side is at most 384 px. Each photo
is then cropped to its most textured window: large contiguous flat
regions (sky, backdrops, margins) statistically mimic lens soiling and
would poison the synthetic corpus. Only needed when changing the base
set; the PNGs are committed.

Requires scikit-image (not a lensqc dependency).
"""

import sys
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage
import skimage.data

# all load offline and are CC0/public domain; excluded: clock (mostly
# motion-blurred wall) and chelsea (shallow depth of field, the defocused
# background reads as lens soiling)
SOURCES = [
    "astronaut",
    "brick",
    "camera",
    "coffee",
    "coins",
    "grass",
    "gravel",
    "immunohistochemistry",
    "page",
    "text",
]

MAX_SIDE = 384
LUMA = np.array([0.299, 0.587, 0.114])
FLAT_SIGMA = 0.012
ERODE_RADIUS = 8
TARGET_FLAT = 0.03


def to_gray_u8(arr):
    if arr.ndim == 3:
        arr = arr[..., :3].astype(np.float64) @ LUMA
        return np.clip(np.floor(arr + 0.5), 0, 255).astype(np.uint8)
    return arr.astype(np.uint8)


def blobby_flat_map(gray):
    """Mask of pixels inside large contiguous low-contrast regions."""
    x = gray.astype(np.float64) / 255.0
    m1 = ndimage.uniform_filter(x, 7, mode="mirror")
    m2 = ndimage.uniform_filter(x * x, 7, mode="mirror")
    sigma = np.sqrt(np.maximum(m2 - m1 * m1, 0.0))
    flat = sigma < FLAT_SIGMA
    r = ERODE_RADIUS
    selem = np.hypot(*np.ogrid[-r : r + 1, -r : r + 1]) <= r
    return ndimage.binary_erosion(flat, structure=selem)


def best_texture_window(gray):
    """Largest window whose big-flat-region fraction is below TARGET_FLAT."""
    flat = blobby_flat_map(gray)
    integral = flat.cumsum(axis=0).cumsum(axis=1)
    h, w = gray.shape

    def flat_frac(y0, x0, hh, ww):
        y1, x1 = y0 + hh - 1, x0 + ww - 1
        total = integral[y1, x1]
        if y0 > 0:
            total -= integral[y0 - 1, x1]
        if x0 > 0:
            total -= integral[y1, x0 - 1]
        if y0 > 0 and x0 > 0:
            total += integral[y0 - 1, x0 - 1]
        return total / (hh * ww)

    fallback = None
    for frac in (1.0, 0.95, 0.9, 0.85, 0.8, 0.75, 0.7, 0.65, 0.6):
        hh, ww = int(h * frac), int(w * frac)
        best = None
        for y0 in range(0, h - hh + 1, 16) or [0]:
            for x0 in range(0, w - ww + 1, 16) or [0]:
                score = flat_frac(y0, x0, hh, ww)
                if best is None or score < best[0]:
                    best = (score, y0, x0, hh, ww)
        if fallback is None or best[0] < fallback[0]:
            fallback = best
        if best[0] <= TARGET_FLAT:
            return best
    return fallback


def main():
    out_dir = Path(__file__).resolve().parents[1] / "src" / "lensqc" / "data" / "bases"
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in SOURCES:
        arr = getattr(skimage.data, name)()
        gray = to_gray_u8(arr)
        im = Image.fromarray(gray, mode="L")
        long_side = max(im.size)
        if long_side > MAX_SIDE:
            scale = MAX_SIDE / long_side
            im = im.resize(
                (max(int(im.size[0] * scale), 9), max(int(im.size[1] * scale), 9)),
                Image.LANCZOS,
            )
        gray = np.asarray(im)
        score, y0, x0, hh, ww = best_texture_window(gray)
        cropped = gray[y0 : y0 + hh, x0 : x0 + ww]
        path = out_dir / f"{name}.png"
        Image.fromarray(cropped, mode="L").save(path, format="PNG")
        print(f"wrote {path} ({ww}x{hh}, flat {score:.1%})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
