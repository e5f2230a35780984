"""Synthetic degradation corpus: blur, noise, underexposure, glare, soiling.

Every transformation is deterministic given (kind, severity, seed,
input). Severity is in (0, 1] and maps to fixed parameterizations:

    blur            Gaussian blur, sigma = 4 * severity
    noise           additive zero-mean Gaussian, std = 0.15 * severity
    underexposure   multiply by (1 - 0.85*severity), then gamma 1+severity
    glare           saturated additive radial blob, radius
                    (10 + 40*severity)% of the short side, seeded position
    soiling         3-8 seeded semi-transparent blurred blobs occluding
                    up to 40*severity% of the image

These parameterizations are invented for corpus generation; they produce
a learnable six-class problem, they do not model lens physics.
"""

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import ndimage

from .dataset import CANONICAL_LABELS, Manifest, ManifestEntry, save_manifest
from .image import load_image, require_gray, save_gray_png

GENERATOR_NAME = "numpy.random.PCG64"
CORPUS_VERSION = 1

DEGRADATION_KINDS = ("blur", "noise", "underexposure", "glare", "soiling")
_KIND_FOR_LABEL = {
    "soiled": "soiling",
    "blur": "blur",
    "glare": "glare",
    "noise": "noise",
    "underexposure": "underexposure",
}


@dataclass(frozen=True)
class DegradeSpec:
    kind: str
    severity: float
    seed: int = 0

    def __post_init__(self):
        if self.kind not in DEGRADATION_KINDS:
            raise ValueError(f"unknown degradation kind {self.kind!r}")
        if not 0.0 < self.severity <= 1.0:
            raise ValueError(f"severity must be in (0, 1], got {self.severity}")


def apply_degradation(img, spec):
    """Apply one degradation; output intensities are clipped to [0, 1]."""
    x = require_gray(img)
    rng = np.random.default_rng(spec.seed)
    s = spec.severity
    if spec.kind == "blur":
        out = ndimage.gaussian_filter(x, sigma=4.0 * s, mode="mirror")
    elif spec.kind == "noise":
        out = x + rng.normal(0.0, 0.15 * s, size=x.shape)
    elif spec.kind == "underexposure":
        out = np.power(x * (1.0 - 0.85 * s), 1.0 + s)
    elif spec.kind == "glare":
        out = _add_glare(x, s, rng)
    else:  # soiling
        out = _add_soiling(x, s, rng)
    return np.clip(out, 0.0, 1.0)


def _add_glare(x, severity, rng):
    h, w = x.shape
    radius = (0.10 + 0.40 * severity) * min(h, w)
    cy = rng.uniform(0.2 * h, 0.8 * h)
    cx = rng.uniform(0.2 * w, 0.8 * w)
    yy, xx = np.ogrid[:h, :w]
    d2 = ((yy - cy) ** 2 + (xx - cx) ** 2) / (radius * radius)
    profile = np.clip(1.0 - d2, 0.0, 1.0) ** 2
    amplitude = 1.2 + 0.8 * severity  # > 1 so the blob center saturates
    return x + amplitude * profile


def _add_soiling(x, severity, rng):
    h, w = x.shape
    n_blobs = int(rng.integers(3, 9))
    area_budget = 0.40 * severity * h * w
    shares = rng.uniform(0.5, 1.5, size=n_blobs)
    shares *= area_budget / shares.sum()
    # matter on the lens sits far out of focus: inside a blob the scene is
    # heavily defocused and mixed with the matter's own brightness
    defocused = ndimage.gaussian_filter(x, sigma=4.0 + 4.0 * severity, mode="mirror")
    out = x.copy()
    yy, xx = np.ogrid[:h, :w]
    for area in shares:
        r = np.sqrt(area / np.pi)
        stretch = rng.uniform(0.7, 1.4)
        ry, rx = max(r * stretch, 3.0), max(r / stretch, 3.0)
        cy = rng.uniform(0.15 * h, 0.85 * h)
        cx = rng.uniform(0.15 * w, 0.85 * w)
        d2 = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2
        # flat-topped profile: fully covered core, soft rim
        mask = np.clip(1.5 * (1.0 - d2), 0.0, 1.0)
        mask = ndimage.gaussian_filter(mask, sigma=2.0 + 3.0 * severity, mode="mirror")
        if rng.uniform() < 0.65:
            matter = rng.uniform(0.05, 0.30)  # mud, dirt
        else:
            matter = rng.uniform(0.65, 0.90)  # water droplet catching light
        opacity = rng.uniform(0.70, 0.95)
        inside = defocused * (1.0 - opacity) + matter * opacity
        out = out * (1.0 - mask) + inside * mask
    return out


def bundled_base_paths():
    """Paths of the base images shipped with the package, sorted by name."""
    base_dir = resources.files("lensqc").joinpath("data/bases")
    paths = sorted(Path(str(base_dir)).glob("*.png"))
    if not paths:
        raise FileNotFoundError("no bundled base images found under lensqc/data/bases")
    return paths


def build_corpus(base_paths, out_dir, per_class=100, seed=42,
                 crop_range=(0.80, 0.95), progress=None):
    """Generate a balanced six-class corpus under ``out_dir``.

    Writes PNGs to out_dir/images/, a manifest.csv with paths relative to
    out_dir, and corpus_meta.json recording the generator, seed, and
    per-image parameters. Each output image is an independently seeded
    random crop of a base image (so repeated clean samples are not byte
    duplicates), degraded according to its class. Camera tags cycle
    FV, RV, MVL, MVR for protocol experiments.

    Per-image randomness is seeded as (seed, image index), so generation
    order or parallelism cannot change the output.
    """
    base_paths = [Path(p) for p in base_paths]
    if not base_paths:
        raise ValueError("need at least one base image")
    if per_class < 1:
        raise ValueError(f"per-class count must be >= 1, got {per_class}")

    out_dir = Path(out_dir)
    img_dir = out_dir / "images"
    img_dir.mkdir(parents=True, exist_ok=True)

    bases = [load_image(p) for p in base_paths]
    cameras = ("FV", "RV", "MVL", "MVR")
    entries = []
    records = []
    total = per_class * len(CANONICAL_LABELS)
    index = 0
    for label in CANONICAL_LABELS:
        for i in range(per_class):
            rng = np.random.default_rng([seed, index])
            base_idx = index % len(bases)
            cropped, crop_box = _seeded_crop(bases[base_idx], rng, crop_range)
            record = {
                "file": f"images/{label}_{i:04d}.png",
                "label": label,
                "camera": cameras[index % len(cameras)],
                "base": base_paths[base_idx].name,
                "crop": crop_box,
            }
            if label == "clean":
                result = cropped
            else:
                severity = float(rng.uniform(0.3, 1.0))
                spec = DegradeSpec(
                    kind=_KIND_FOR_LABEL[label],
                    severity=severity,
                    seed=int(rng.integers(0, 2 ** 31)),
                )
                result = apply_degradation(cropped, spec)
                record["severity"] = severity
                record["degrade_seed"] = spec.seed
            save_gray_png(result, out_dir / record["file"])
            entries.append(
                ManifestEntry(
                    path=record["file"],
                    label=label,
                    camera=record["camera"],
                    dataset="synthetic",
                )
            )
            records.append(record)
            index += 1
            if progress is not None:
                progress(index, total)

    manifest = Manifest(entries=entries)
    save_manifest(manifest, out_dir / "manifest.csv")
    meta = {
        "corpus_version": CORPUS_VERSION,
        "generator": GENERATOR_NAME,
        "generator_library": f"numpy {np.__version__}",
        "seed": seed,
        "per_class": per_class,
        "labels": list(CANONICAL_LABELS),
        "base_images": [p.name for p in base_paths],
        "crop_range": list(crop_range),
        "images": records,
    }
    with open(out_dir / "corpus_meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1)
        fh.write("\n")
    return manifest


def _seeded_crop(img, rng, crop_range):
    h, w = img.shape
    lo, hi = crop_range
    ch = max(int(round(rng.uniform(lo, hi) * h)), 9)
    cw = max(int(round(rng.uniform(lo, hi) * w)), 9)
    y0 = int(rng.integers(0, h - ch + 1))
    x0 = int(rng.integers(0, w - cw + 1))
    return img[y0 : y0 + ch, x0 : x0 + cw].copy(), [y0, x0, ch, cw]
