"""Datasets: IDX files, controlled-decay synthetic data, CSV export.

IDX files follow the published MNIST format exactly: big-endian 32-bit
dimensions, magic 0x00000803 for image tensors and 0x00000801 for label
vectors. Pixel values are scaled to [0, 1] on load and labels one-hot
encoded.
"""

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadMagic, TruncatedFile

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


@dataclass
class Dataset:
    inputs: np.ndarray   # (n, d_x)
    targets: np.ndarray  # (n, classes) one-hot, or (n, 1) regression
    name: str = "dataset"

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.inputs.ndim != 2 or self.targets.ndim != 2:
            raise ValueError("inputs and targets must be 2-d")
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ValueError("inputs and targets disagree on sample count")
        if self.inputs.shape[0] < 1:
            raise ValueError("dataset needs n >= 1 samples")
        if not (np.all(np.isfinite(self.inputs)) and np.all(np.isfinite(self.targets))):
            raise ValueError("dataset contains non-finite entries")

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]


def _read_exact(fh, count: int, what: str) -> bytes:
    buf = fh.read(count)
    if len(buf) != count:
        raise TruncatedFile(f"{what}: expected {count} bytes, got {len(buf)}")
    return buf


def load_idx(images_path, labels_path, limit: int | None = None,
             classes: int = 10, name: str | None = None) -> Dataset:
    """Read an IDX image/label pair into a Dataset.

    Pixels are scaled to [0, 1] and labels one-hot encoded over
    `classes`. `limit` keeps only the first samples; limit = 0 is
    rejected because a dataset needs n >= 1.
    """
    if limit is not None and limit < 1:
        raise ValueError("limit must be >= 1 (dataset needs n >= 1)")
    images_path, labels_path = Path(images_path), Path(labels_path)
    with open(images_path, "rb") as fh:
        magic, count, rows, cols = struct.unpack(">iiii", _read_exact(fh, 16, "image header"))
        if magic != IMAGE_MAGIC:
            raise BadMagic(f"{images_path.name}: magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}")
        keep = count if limit is None else min(limit, count)
        raw = _read_exact(fh, keep * rows * cols, "image data")
        images = np.frombuffer(raw, dtype=np.uint8).reshape(keep, rows * cols)
    with open(labels_path, "rb") as fh:
        magic, lcount = struct.unpack(">ii", _read_exact(fh, 8, "label header"))
        if magic != LABEL_MAGIC:
            raise BadMagic(f"{labels_path.name}: magic {magic:#010x}, expected {LABEL_MAGIC:#010x}")
        if lcount != count:
            raise TruncatedFile(f"label count {lcount} != image count {count}")
        raw = _read_exact(fh, keep, "label data")
        labels = np.frombuffer(raw, dtype=np.uint8)
    inputs = images.astype(np.float64) / 255.0
    onehot = np.zeros((keep, classes))
    onehot[np.arange(keep), labels] = 1.0
    return Dataset(inputs, onehot, name=name or images_path.stem)


def write_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path,
              side: int | None = None) -> None:
    """Write an IDX image/label pair (inputs in [0, 1] quantized to uint8)."""
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, d = images.shape
    if side is None:
        side = int(round(d ** 0.5))
    if side * side != d:
        raise ValueError(f"cannot fold {d} pixels into a square image")
    pixels = np.clip(np.rint(images * 255.0), 0, 255).astype(np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">iiii", IMAGE_MAGIC, n, side, side))
        fh.write(pixels.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">ii", LABEL_MAGIC, n))
        fh.write(labels.astype(np.uint8).tobytes())


def synth_spectrum(n: int, d: int, decay: float, seed: int,
                   teacher_width: int = 32, teacher: str = "relu") -> Dataset:
    """Gaussian inputs whose population covariance eigenvalues follow
    mu_j proportional to j^(-decay), with regression targets from a fixed
    random teacher: a one-hidden-layer relu net (default) or, with
    teacher="linear", an affine map that a single layer can fit exactly."""
    if decay < 0:
        raise ValueError("decay exponent must be >= 0")
    rng = np.random.default_rng(seed)
    scales = np.arange(1, d + 1, dtype=np.float64) ** (-decay / 2.0)
    inputs = rng.standard_normal((n, d)) * scales
    teacher_rng = np.random.default_rng(seed + 1)
    if teacher == "linear":
        w = teacher_rng.standard_normal((1, d)) / np.sqrt(d)
        b = teacher_rng.standard_normal(1)
        targets = inputs @ w.T + b
    elif teacher == "relu":
        w1 = teacher_rng.standard_normal((teacher_width, d)) / np.sqrt(d)
        b1 = 0.1 * teacher_rng.standard_normal(teacher_width)
        w2 = teacher_rng.standard_normal((1, teacher_width)) / np.sqrt(teacher_width)
        hidden = np.maximum(inputs @ w1.T + b1, 0.0)
        targets = hidden @ w2.T
    else:
        raise ValueError(f"unknown teacher kind {teacher!r}")
    return Dataset(inputs, targets, name=f"synth_p{decay:g}_n{n}")


def digits784(n: int, seed: int, noise: float = 0.01) -> Dataset:
    """Handwritten digits upsampled from sklearn's bundled 8x8 set to
    28x28 (784-d), replicated to n samples with tiny seeded pixel noise.

    Offline stand-in for MNIST: real image data with a fast-decaying
    covariance spectrum, usable without downloads.
    """
    from scipy import ndimage
    from sklearn.datasets import load_digits

    base = load_digits()
    images = base.images / 16.0
    up = np.stack([ndimage.zoom(img, 28 / 8, order=1) for img in images])
    flat = np.clip(up.reshape(len(up), 784), 0.0, 1.0)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(flat), size=n)
    inputs = flat[idx] + noise * rng.standard_normal((n, 784))
    inputs = np.clip(inputs, 0.0, 1.0)
    labels = base.target[idx]
    onehot = np.zeros((n, 10))
    onehot[np.arange(n), labels] = 1.0
    return Dataset(inputs, onehot, name=f"digits784_n{n}")


def to_csv(ds: Dataset, path) -> None:
    """Dump a dataset for inspection: one row per sample, inputs then targets."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [f"x{i}" for i in range(ds.dim)]
            + [f"y{i}" for i in range(ds.targets.shape[1])]
        )
        for x, y in zip(ds.inputs, ds.targets):
            writer.writerow([repr(v) for v in x] + [repr(v) for v in y])
