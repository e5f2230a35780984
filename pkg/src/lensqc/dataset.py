"""Labeled image corpora: manifests, splits, feature caches, evaluation.

A manifest is a UTF-8 CSV with header ``path,label,camera,dataset``;
camera tags come from {FV, RV, MVL, MVR, unknown}. The feature cache is
a CSV with one row per image (path, label, camera, 20 feature columns)
whose float serialization round-trips bit-exactly.
"""

import csv
import io
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .errors import (
    ClassTooSmallError,
    DuplicatePathError,
    EmptyResultError,
    FeatureOrderError,
    LabelMismatchError,
    ManifestParseError,
    UnknownLabelError,
)
from .features import FEATURE_NAMES, N_FEATURES, extract_features
from .filters import FilterConfig, compute_fields
from .image import load_image

CAMERA_TAGS = ("FV", "RV", "MVL", "MVR", "unknown")
CANONICAL_LABELS = ("clean", "soiled", "blur", "glare", "noise", "underexposure")

_MANIFEST_HEADER = ["path", "label", "camera", "dataset"]


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: str
    camera: str = "unknown"
    dataset: str = "unknown"


@dataclass
class Manifest:
    """Ordered list of labeled images; paths are unique."""

    entries: list

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def labels(self):
        """Distinct labels in order of first appearance."""
        return list(dict.fromkeys(e.label for e in self.entries))

    def class_counts(self):
        counts = {}
        for e in self.entries:
            counts[e.label] = counts.get(e.label, 0) + 1
        return counts


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.75
    seed: int = 42
    stratified: bool = True

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train fraction must be in (0,1), got {self.train_fraction}")


def _validate_entries(entries, allowed_labels=None):
    if not entries:
        raise ManifestParseError("manifest has no entries")
    seen = set()
    for e in entries:
        if e.path in seen:
            raise DuplicatePathError(f"duplicate manifest path: {e.path}")
        seen.add(e.path)
        if allowed_labels is not None and e.label not in allowed_labels:
            raise UnknownLabelError(
                f"label {e.label!r} for {e.path} not in declared set {sorted(allowed_labels)}"
            )


def make_manifest(entries, allowed_labels=None):
    entries = list(entries)
    _validate_entries(entries, allowed_labels)
    return Manifest(entries=entries)


def load_manifest(path, allowed_labels=None):
    """Read and validate a manifest CSV; missing camera/dataset become 'unknown'."""
    entries = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestParseError(f"{path}: empty file", line_no=1) from None
        if [h.strip() for h in header[:2]] != _MANIFEST_HEADER[:2]:
            raise ManifestParseError(
                f"{path}: header must start with 'path,label', got {header!r}", line_no=1
            )
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < 2:
                raise ManifestParseError(
                    f"{path}:{line_no}: expected at least path and label", line_no=line_no
                )
            img_path = row[0].strip()
            label = row[1].strip()
            if not img_path or not label:
                raise ManifestParseError(
                    f"{path}:{line_no}: empty path or label", line_no=line_no
                )
            camera = row[2].strip() if len(row) > 2 and row[2].strip() else "unknown"
            ds = row[3].strip() if len(row) > 3 and row[3].strip() else "unknown"
            if camera not in CAMERA_TAGS:
                raise ManifestParseError(
                    f"{path}:{line_no}: unknown camera tag {camera!r}", line_no=line_no
                )
            entries.append(ManifestEntry(path=img_path, label=label, camera=camera, dataset=ds))
    _validate_entries(entries, allowed_labels)
    return Manifest(entries=entries)


def save_manifest(manifest, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_MANIFEST_HEADER)
        for e in manifest.entries:
            writer.writerow([e.path, e.label, e.camera, e.dataset])


def split(manifest, spec):
    """Deterministic train/test split; train size is floor(fraction * n).

    When stratified, per-class train counts start at floor(fraction * n_c)
    and the remaining slots go to the classes with the largest fractional
    remainders (ties by class order), so per-class proportions hold
    within one sample and the global count is exact.
    """
    n = len(manifest)
    n_train = int(np.floor(spec.train_fraction * n))
    rng = np.random.default_rng(spec.seed)

    if not spec.stratified:
        idx = rng.permutation(n)
        train_idx = set(idx[:n_train].tolist())
    else:
        by_class = {}
        for k, e in enumerate(manifest.entries):
            by_class.setdefault(e.label, []).append(k)
        for lab, idxs in by_class.items():
            if len(idxs) < 2:
                raise ClassTooSmallError(
                    f"class {lab!r} has {len(idxs)} sample(s); stratified split needs >= 2"
                )
        targets = {lab: spec.train_fraction * len(idxs) for lab, idxs in by_class.items()}
        takes = {lab: int(np.floor(t)) for lab, t in targets.items()}
        leftover = n_train - sum(takes.values())
        remainders = sorted(
            by_class.keys(),
            key=lambda lab: (-(targets[lab] - takes[lab]), manifest.labels.index(lab)),
        )
        for lab in remainders[:leftover]:
            takes[lab] += 1
        train_idx = set()
        for lab in manifest.labels:
            idxs = np.asarray(by_class[lab])
            rng.shuffle(idxs)
            train_idx.update(idxs[: takes[lab]].tolist())

    train = [e for k, e in enumerate(manifest.entries) if k in train_idx]
    test = [e for k, e in enumerate(manifest.entries) if k not in train_idx]
    return Manifest(entries=train), Manifest(entries=test)


def filter_by_camera(manifest, tags):
    """Keep entries whose camera tag is in ``tags``."""
    tags = set(tags)
    if not tags:
        raise ValueError("camera tag set must be non-empty")
    kept = [e for e in manifest.entries if e.camera in tags]
    if not kept:
        raise EmptyResultError(f"no entries with camera in {sorted(tags)}")
    return Manifest(entries=kept)


# --- feature cache ---

_CACHE_HEADER = ["path", "label", "camera", *FEATURE_NAMES]


@dataclass
class FeatureCache:
    """Parallel lists: one row of (path, label, camera, features) per image."""

    paths: list
    labels: list
    cameras: list
    features: np.ndarray  # (n, 20)

    def __len__(self):
        return len(self.paths)

    def select(self, keep_paths):
        keep = set(keep_paths)
        idx = [k for k, p in enumerate(self.paths) if p in keep]
        return FeatureCache(
            paths=[self.paths[k] for k in idx],
            labels=[self.labels[k] for k in idx],
            cameras=[self.cameras[k] for k in idx],
            features=self.features[idx] if idx else np.empty((0, N_FEATURES)),
        )


def save_feature_cache(cache, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_CACHE_HEADER)
        for k in range(len(cache)):
            writer.writerow(
                [cache.paths[k], cache.labels[k], cache.cameras[k]]
                + [repr(float(v)) for v in cache.features[k]]
            )


def load_feature_cache(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestParseError(f"{path}: empty feature cache", line_no=1) from None
        if header != _CACHE_HEADER:
            raise FeatureOrderError(
                f"{path}: cache header does not match this build's feature order"
            )
        paths, labels, cameras, rows = [], [], [], []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(_CACHE_HEADER):
                raise ManifestParseError(
                    f"{path}:{line_no}: expected {len(_CACHE_HEADER)} columns, got {len(row)}",
                    line_no=line_no,
                )
            paths.append(row[0])
            labels.append(row[1])
            cameras.append(row[2])
            rows.append([float(v) for v in row[3:]])
    feats = np.asarray(rows, dtype=np.float64) if rows else np.empty((0, N_FEATURES))
    return FeatureCache(paths=paths, labels=labels, cameras=cameras, features=feats)


def cache_features(manifest, cfg=None, root=None, progress=None):
    """Extract features for every manifest entry.

    Returns (FeatureCache, failures) where failures is a list of
    (path, message). Failing images are skipped, never fatal here;
    thresholds are the caller's concern. ``root`` resolves relative
    manifest paths.
    """
    cfg = cfg or FilterConfig()
    root = Path(root) if root is not None else None
    paths, labels, cameras, rows = [], [], [], []
    failures = []
    for k, e in enumerate(manifest.entries):
        full = Path(e.path)
        if root is not None and not full.is_absolute():
            full = root / full
        try:
            img = load_image(full)
            vec = extract_features(compute_fields(img, cfg))
        except Exception as exc:  # noqa: BLE001 - per-image failures are collected
            failures.append((e.path, f"{type(exc).__name__}: {exc}"))
            continue
        paths.append(e.path)
        labels.append(e.label)
        cameras.append(e.camera)
        rows.append(vec)
        if progress is not None:
            progress(k + 1, len(manifest))
    feats = np.asarray(rows, dtype=np.float64) if rows else np.empty((0, N_FEATURES))
    return FeatureCache(paths=paths, labels=labels, cameras=cameras, features=feats), failures


# --- evaluation ---

@dataclass
class EvalReport:
    """Accuracy plus raw and row-normalized confusion matrices."""

    labels: list
    accuracy: float
    confusion_raw: np.ndarray
    confusion_norm: np.ndarray
    per_class_counts: dict
    zero_rows: list = dc_field(default_factory=list)
    meta: dict = dc_field(default_factory=dict)

    def to_dict(self):
        return {
            "labels": list(self.labels),
            "accuracy": self.accuracy,
            "confusion_raw": self.confusion_raw.tolist(),
            "confusion_norm": self.confusion_norm.tolist(),
            "per_class_counts": dict(self.per_class_counts),
            "zero_rows": list(self.zero_rows),
            "meta": dict(self.meta),
        }

    def to_text(self):
        buf = io.StringIO()
        buf.write(f"accuracy: {self.accuracy:.4f}\n")
        buf.write(f"labels: {', '.join(self.labels)}\n\n")
        width = max(len(lab) for lab in self.labels) + 2
        buf.write("raw confusion (rows = true, cols = predicted):\n")
        header = " " * width + "".join(f"{lab:>{width}}" for lab in self.labels)
        buf.write(header + "\n")
        for r, lab in enumerate(self.labels):
            cells = "".join(f"{int(v):>{width}}" for v in self.confusion_raw[r])
            buf.write(f"{lab:>{width}}" + cells + "\n")
        buf.write("\nrow-normalized confusion:\n")
        buf.write(header + "\n")
        for r, lab in enumerate(self.labels):
            cells = "".join(f"{v:>{width}.3f}" for v in self.confusion_norm[r])
            buf.write(f"{lab:>{width}}" + cells + "\n")
        if self.zero_rows:
            buf.write(f"\nclasses with no test samples: {', '.join(self.zero_rows)}\n")
        return buf.getvalue()


def confusion_matrices(true_labels, pred_labels, label_order):
    """Raw counts and row-normalized (over true classes) confusion matrices."""
    order = {lab: k for k, lab in enumerate(label_order)}
    n = len(label_order)
    raw = np.zeros((n, n), dtype=np.int64)
    for t, p in zip(true_labels, pred_labels):
        raw[order[t], order[p]] += 1
    norm = np.zeros((n, n), dtype=np.float64)
    zero_rows = []
    for r in range(n):
        total = raw[r].sum()
        if total == 0:
            zero_rows.append(label_order[r])
        else:
            norm[r] = raw[r] / total
    return raw, norm, zero_rows


def evaluate(model, features, true_labels, meta=None):
    """Score a model on labeled features; label order comes from the model."""
    true_labels = list(true_labels)
    if not true_labels:
        raise LabelMismatchError("empty test set")
    unknown = set(true_labels) - set(model.labels)
    if unknown:
        raise LabelMismatchError(
            f"test labels not covered by the model: {sorted(unknown)}"
        )
    pred = model.predict(features)
    raw, norm, zero_rows = confusion_matrices(true_labels, pred, model.labels)
    accuracy = float(np.trace(raw) / raw.sum())
    counts = {lab: int(c) for lab, c in zip(model.labels, raw.sum(axis=1))}
    return EvalReport(
        labels=list(model.labels),
        accuracy=accuracy,
        confusion_raw=raw,
        confusion_norm=norm,
        per_class_counts=counts,
        zero_rows=zero_rows,
        meta=dict(meta or {}),
    )
