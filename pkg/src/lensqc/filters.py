"""Filter bank: five fields derived from a grayscale frame via a shared
local mean mu (circular Gaussian weighted average):

  * local mean subtracted     I - mu
  * local contrast            sigma, Gaussian-weighted local std dev
  * Laplacian                 4-neighbor second-derivative stencil
  * MSCN coefficients         (I - mu) / (sigma + e)
  * horizontal MSCN products  M(i,j) * M(i,j+1)

All windowed operations use mirror padding (edge pixel not repeated,
``np.pad(mode="reflect")``). Gaussian passes are evaluated in centered
form ``x + sum_t w_t * (shift_t(x) - x)`` so that a constant image maps
to exactly-zero derived fields; the result agrees with the direct 2-D
weighted sum to ~1e-15.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ImageTooNarrowError,
    InvalidRadiusError,
    NonPositiveEpsilonError,
    ShapeMismatchError,
)
from .image import require_gray

DEFAULT_RADIUS = 3
DEFAULT_EPS = 1.0 / 255.0


@dataclass(frozen=True)
class FilterConfig:
    """Filter-bank parameters, serializable into run reports."""

    radius_k: int = DEFAULT_RADIUS
    radius_l: int = DEFAULT_RADIUS
    eps: float = DEFAULT_EPS
    laplacian: str = "cross4"

    def __post_init__(self):
        if self.radius_k < 1 or self.radius_l < 1:
            raise InvalidRadiusError(
                f"kernel radii must be >= 1, got ({self.radius_k}, {self.radius_l})"
            )
        if self.eps <= 0:
            raise NonPositiveEpsilonError(f"eps must be > 0, got {self.eps}")
        if self.laplacian != "cross4":
            raise ValueError(f"unknown laplacian variant {self.laplacian!r}")


@dataclass(frozen=True)
class GaussianKernel:
    """Circular Gaussian weights on a (2K+1) x (2L+1) grid, unit sum.

    The standard deviation is (2K+1)/6 so the kernel edge sits at three
    standard deviations. ``row`` and ``col`` are the separable 1-D
    factors; ``weights`` is their outer product.
    """

    radius_k: int
    radius_l: int
    row: np.ndarray = field(repr=False)
    col: np.ndarray = field(repr=False)

    @property
    def weights(self):
        return np.outer(self.row, self.col)


def gaussian_kernel(radius_k=DEFAULT_RADIUS, radius_l=DEFAULT_RADIUS):
    """Build the circular Gaussian averaging kernel for the given radii."""
    if radius_k < 1 or radius_l < 1:
        raise InvalidRadiusError(f"radii must be >= 1, got ({radius_k}, {radius_l})")
    s = (2 * radius_k + 1) / 6.0
    return GaussianKernel(
        radius_k=radius_k,
        radius_l=radius_l,
        row=_gauss_1d(radius_k, s),
        col=_gauss_1d(radius_l, s),
    )


def _gauss_1d(radius, s):
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-(offsets ** 2) / (2.0 * s * s))
    w /= w.sum()
    return w


def _pad_axis(x, radius, axis):
    pad = [(0, 0), (0, 0)]
    pad[axis] = (radius, radius)
    return np.pad(x, pad, mode="reflect")


def _centered_pass(x, weights, axis):
    """One separable weighted-average pass along ``axis``.

    Accumulates w_t * (shifted - x) around the identity, which keeps a
    constant input bitwise unchanged regardless of float rounding in the
    kernel normalization.
    """
    radius = len(weights) // 2
    xp = _pad_axis(x, radius, axis)
    n = x.shape[axis]
    out = x.copy()
    for t, w in enumerate(weights):
        if t == radius:
            continue
        sl = [slice(None), slice(None)]
        sl[axis] = slice(t, t + n)
        out += w * (xp[tuple(sl)] - x)
    return out


def _gauss_smooth(x, kern):
    return _centered_pass(_centered_pass(x, kern.row, 0), kern.col, 1)


def local_mean(img, kern):
    """Gaussian-weighted neighborhood average with mirror padding."""
    return _gauss_smooth(require_gray(img), kern)


def mean_subtracted(img, mu):
    """Elementwise I - mu."""
    img = np.asarray(img, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    if img.shape != mu.shape:
        raise ShapeMismatchError(f"image {img.shape} vs mean field {mu.shape}")
    return img - mu


def local_contrast(img, mu, kern):
    """Gaussian-weighted local standard deviation.

    Computed as sqrt(smooth(I^2) - mu^2); the quadratic expansion is
    algebraically identical to the windowed deviation sum because the
    kernel has unit volume. Negative round-off is clipped before the
    square root.
    """
    img = np.asarray(img, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    if img.shape != mu.shape:
        raise ShapeMismatchError(f"image {img.shape} vs mean field {mu.shape}")
    second_moment = _gauss_smooth(img * img, kern)
    var = second_moment - mu * mu
    np.maximum(var, 0.0, out=var)
    return np.sqrt(var)


def laplacian(img):
    """4-neighbor discrete Laplacian (center -4, cross neighbors +1).

    Mirror padding; neighbor sums are grouped (N+S)+(E+W) so a constant
    image yields exact zeros.
    """
    x = require_gray(img)
    xp = np.pad(x, 1, mode="reflect")
    vertical = xp[:-2, 1:-1] + xp[2:, 1:-1]
    horizontal = xp[1:-1, :-2] + xp[1:-1, 2:]
    return (vertical + horizontal) - 4.0 * x


def mscn(img, mu, sigma, eps=DEFAULT_EPS):
    """Mean subtracted contrast normalized coefficients (I - mu)/(sigma + e)."""
    if eps <= 0:
        raise NonPositiveEpsilonError(f"eps must be > 0, got {eps}")
    img = np.asarray(img, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if not (img.shape == mu.shape == sigma.shape):
        raise ShapeMismatchError(
            f"shapes differ: image {img.shape}, mu {mu.shape}, sigma {sigma.shape}"
        )
    return (img - mu) / (sigma + eps)


def mscn_products(coeffs):
    """Products of horizontally adjacent MSCN coefficients, shape H x (W-1).

    Pairs are taken along the width axis: P(i,j) = M(i,j) * M(i,j+1).
    Some formulations index the neighbor along the row axis instead; this
    implementation deliberately pairs horizontal neighbors.
    """
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.ndim != 2 or coeffs.shape[1] < 2:
        raise ImageTooNarrowError(f"need width >= 2, got shape {coeffs.shape}")
    return coeffs[:, :-1] * coeffs[:, 1:]


@dataclass(frozen=True)
class FilterFieldSet:
    """The six per-image fields consumed by feature extraction."""

    intensity: np.ndarray
    mean_sub: np.ndarray
    contrast: np.ndarray
    laplacian: np.ndarray
    mscn: np.ndarray
    mscn_prod: np.ndarray

    def as_dict(self):
        return {
            "intensity": self.intensity,
            "mean_sub": self.mean_sub,
            "contrast": self.contrast,
            "laplacian": self.laplacian,
            "mscn": self.mscn,
            "mscn_prod": self.mscn_prod,
        }


def compute_fields(img, cfg=None):
    """Compute all six fields; mu and sigma are computed once and shared."""
    cfg = cfg or FilterConfig()
    x = require_gray(img)
    kern = gaussian_kernel(cfg.radius_k, cfg.radius_l)
    mu = _gauss_smooth(x, kern)
    sigma = local_contrast(x, mu, kern)
    coeffs = mscn(x, mu, sigma, cfg.eps)
    return FilterFieldSet(
        intensity=x,
        mean_sub=x - mu,
        contrast=sigma,
        laplacian=laplacian(x),
        mscn=coeffs,
        mscn_prod=mscn_products(coeffs),
    )


def export_field_pngs(fields, out_dir):
    """Debug export: write each field min-max normalized as an 8-bit PNG."""
    from pathlib import Path

    from PIL import Image

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, arr in fields.as_dict().items():
        lo, hi = float(arr.min()), float(arr.max())
        scaled = np.zeros_like(arr) if hi <= lo else (arr - lo) / (hi - lo)
        q = np.floor(scaled * 255.0 + 0.5).astype(np.uint8)
        path = out_dir / f"{name}.png"
        Image.fromarray(q, mode="L").save(path, format="PNG")
        written.append(path)
    return written
