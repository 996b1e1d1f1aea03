"""Dataset storage, loading, and the synthetic benchmark generator.

On-disk format (one directory per dataset):

* ``manifest.json`` -- name, image shape, class count, per-split file names
  and sample counts, and the per-channel ``[min, max]`` normalization
  constants computed from the training split.
* ``<split>_images.f32`` -- little-endian float32, row-major
  ``(sample, row, col, channel)``.
* ``<split>_labels.u16`` -- little-endian uint16 class indices.

Loading normalizes every split to [0, 1] with the training-split constants; a
degenerate channel (max == min) maps to 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

MANIFEST_NAME = "manifest.json"
FORMAT_VERSION = 1
SPLIT_ORDER = ("train", "validation", "test")


@dataclass
class SyntheticSpec:
    """Deterministic stand-in for the EO benchmarks: one oriented sinusoidal
    grating per class (orientation k*pi/num_classes) plus uniform noise."""

    num_classes: int
    image_size: int
    channels: int
    train_samples: int
    validation_samples: int
    test_samples: int
    noise: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.noise < 0:
            raise ValueError("noise level must be >= 0")
        if min(self.num_classes, self.image_size, self.channels) < 1:
            raise ValueError("classes, image size, and channels must be positive")

    def split_counts(self) -> dict:
        return {
            "train": self.train_samples,
            "validation": self.validation_samples,
            "test": self.test_samples,
        }


def channel_range(images: np.ndarray) -> np.ndarray:
    """Per-channel (min, max) pairs, shape (channels, 2)."""
    flat = images.reshape(-1, images.shape[-1])
    return np.stack([flat.min(axis=0), flat.max(axis=0)], axis=1)


def normalize(images: np.ndarray, constants: np.ndarray) -> np.ndarray:
    lo = constants[:, 0]
    span = constants[:, 1] - constants[:, 0]
    safe = np.where(span > 0, span, 1.0)
    out = (images.astype(np.float64) - lo) / safe
    return np.where(span > 0, out, 0.0)


def write_dataset(directory, name: str, splits: dict, num_classes: int) -> dict:
    """Write raw (unnormalized) splits plus a manifest; returns the manifest.

    ``splits`` maps split name to ``(images float array, labels int array)``.
    Normalization constants are taken from the training split.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    converted = {
        split: (np.ascontiguousarray(images, dtype="<f4"), np.ascontiguousarray(labels, dtype="<u2"))
        for split, (images, labels) in splits.items()
    }
    shape = converted["train"][0].shape[1:]
    # constants come from the float32 data as stored, so the training min/max
    # map to exactly 0 and 1 after a round trip
    manifest = {
        "format_version": FORMAT_VERSION,
        "name": name,
        "image_shape": [int(s) for s in shape],
        "num_classes": int(num_classes),
        "splits": {},
        "normalization": [[float(a), float(b)] for a, b in channel_range(converted["train"][0])],
    }
    for split in SPLIT_ORDER:
        images, labels = converted[split]
        if images.shape[1:] != shape:
            raise ValueError(f"split {split} has image shape {images.shape[1:]}, expected {shape}")
        if images.shape[0] != labels.shape[0]:
            raise ValueError(f"split {split} has {images.shape[0]} images but {labels.shape[0]} labels")
        tensor_file = f"{split}_images.f32"
        label_file = f"{split}_labels.u16"
        images.tofile(directory / tensor_file)
        labels.tofile(directory / label_file)
        manifest["splits"][split] = {
            "count": int(images.shape[0]),
            "tensor_file": tensor_file,
            "label_file": label_file,
        }
    with open(directory / MANIFEST_NAME, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def read_manifest(directory) -> dict:
    path = Path(directory) / MANIFEST_NAME
    if not path.is_file():
        raise DataError(f"no {MANIFEST_NAME} in {directory}")
    try:
        with open(path, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed manifest: {exc}") from exc
    required = {"format_version", "name", "image_shape", "num_classes", "splits", "normalization"}
    missing = required - manifest.keys()
    if missing:
        raise DataError(f"manifest is missing fields: {sorted(missing)}")
    if manifest["format_version"] != FORMAT_VERSION:
        raise DataError(f"unsupported manifest format_version {manifest['format_version']}")
    return manifest


def read_split_raw(directory, manifest: dict, split: str):
    """Raw float32 tensors and uint16 labels for one split, byte-exact."""
    directory = Path(directory)
    try:
        entry = manifest["splits"][split]
    except KeyError as exc:
        raise DataError(f"manifest has no split {split!r}") from exc
    n, h, w = entry["count"], *manifest["image_shape"][:2]
    c = manifest["image_shape"][2]
    tensor_path = directory / entry["tensor_file"]
    label_path = directory / entry["label_file"]
    for p in (tensor_path, label_path):
        if not p.is_file():
            raise DataError(f"missing dataset file {p}")
    expected_bytes = n * h * w * c * 4
    blob = tensor_path.read_bytes()
    if len(blob) != expected_bytes:
        raise DataError(
            f"tensor file {tensor_path.name} holds {len(blob)} bytes, "
            f"expected {expected_bytes} for {n} samples"
        )
    images = np.frombuffer(blob, dtype="<f4").reshape(n, h, w, c)
    labels_blob = label_path.read_bytes()
    if len(labels_blob) != n * 2:
        raise DataError(f"label file {label_path.name} holds {len(labels_blob)} bytes, expected {n * 2}")
    labels = np.frombuffer(labels_blob, dtype="<u2").astype(np.int64)
    if labels.size and labels.max() >= manifest["num_classes"]:
        raise DataError(
            f"split {split} contains label {labels.max()} but manifest declares "
            f"{manifest['num_classes']} classes"
        )
    return images, labels


def _subsample_train(labels: np.ndarray, num_classes: int, train_fraction, minority, seed: int) -> np.ndarray:
    """Seeded per-class index selection for the scarcity/imbalance protocols."""
    fractions = np.ones(num_classes)
    if train_fraction is not None:
        if not 0 < train_fraction <= 1:
            raise ValueError("train fraction must be in (0, 1]")
        fractions[:] = train_fraction
    if minority is not None:
        cls, frac = minority
        if not 0 <= cls < num_classes:
            raise ValueError(f"minority class {cls} out of range")
        if not 0 < frac <= 1:
            raise ValueError("minority fraction must be in (0, 1]")
        fractions[cls] = min(fractions[cls], frac)
    rng = np.random.default_rng(seed)
    keep = []
    for cls in range(num_classes):
        idx = np.nonzero(labels == cls)[0]
        count = max(1, int(round(fractions[cls] * idx.size))) if idx.size else 0
        keep.extend(rng.permutation(idx)[:count])
    return np.sort(np.asarray(keep, dtype=np.int64))


def zero_pad(images: np.ndarray, size: int) -> np.ndarray:
    """Grow images to size x size by zero-padding (centered, extra on the
    bottom/right for odd margins); converter for datasets like 28-pixel tiles."""
    n = images.shape[1]
    if size < n:
        raise ValueError(f"cannot pad {n}-pixel images down to {size}")
    if size == n:
        return images
    before = (size - n) // 2
    after = size - n - before
    return np.pad(images, ((0, 0), (before, after), (before, after), (0, 0)))


def load_dataset(directory, train_fraction=None, minority=None, seed: int = 0, pad_to=None) -> dict:
    """All splits, normalized to [0, 1] with the training-split constants.

    Returns ``{split: (images float64, labels int64)}``. ``train_fraction``
    and ``minority=(class, fraction)`` subsample the training split only;
    ``pad_to`` zero-pads normalized images up to a larger spatial size.
    """
    manifest = read_manifest(directory)
    constants = np.asarray(manifest["normalization"], dtype=np.float64)
    out = {}
    for split in SPLIT_ORDER:
        images, labels = read_split_raw(directory, manifest, split)
        if split == "train" and (train_fraction is not None or minority is not None):
            keep = _subsample_train(labels, manifest["num_classes"], train_fraction, minority, seed)
            images, labels = images[keep], labels[keep]
        normalized = normalize(images, constants)
        if pad_to is not None:
            normalized = zero_pad(normalized, pad_to)
        out[split] = (normalized, labels)
    return out


def generate_synthetic(spec: SyntheticSpec, directory) -> dict:
    """Write a synthetic dataset in the manifest format; byte-deterministic."""
    rng = np.random.default_rng(spec.seed)
    n = spec.image_size
    rows, cols = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    cycles = 4.0  # grating frequency across the image
    bases = []
    for cls in range(spec.num_classes):
        theta = cls * np.pi / spec.num_classes
        wave = rows * np.cos(theta) + cols * np.sin(theta)
        bases.append(0.5 + 0.4 * np.sin(2 * np.pi * cycles * wave / n))
    splits = {}
    for split in SPLIT_ORDER:
        count = spec.split_counts()[split]
        labels = np.arange(count) % spec.num_classes
        images = np.empty((count, n, n, spec.channels), dtype=np.float64)
        for i in range(count):
            base = bases[labels[i]][:, :, None]
            noise = rng.uniform(-spec.noise, spec.noise, (n, n, spec.channels)) if spec.noise > 0 else 0.0
            images[i] = np.clip(base + noise, 0.0, 1.0)
        splits[split] = (images, labels)
    return write_dataset(directory, f"synthetic-{spec.num_classes}class", splits, spec.num_classes)
