"""Datasets: IDX and CIFAR-10 binary loaders, a synthetic crater-like
generator, stratified 50/50 splits, and seeded per-epoch batch plans.

The synthetic task is ring-vs-blob discrimination on 15x15 grayscale
images: positives carry a bright annulus on a noise background, negatives
carry filled blobs with matched intensity, so mean brightness alone does
not separate the classes. It stands in for real crater imagery at the
same scale; it is calibrated to be learnable, not claimed equivalent.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .rng import derive_stream
from .tensor import DTYPE

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD_BYTES = 3073  # 1 label byte + 3*32*32 pixel bytes


@dataclass
class Dataset:
    """Images in [0,1] as [N,C,H,W] float64 plus integer labels."""

    images: np.ndarray
    labels: np.ndarray
    name: str
    num_classes: int
    split: str = "full"

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=DTYPE)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise ValueError(f"images must be [N,C,H,W], got shape {self.images.shape}")
        if self.labels.shape != (self.images.shape[0],):
            raise ValueError(f"labels shape {self.labels.shape} does not match {self.images.shape[0]} images")
        if not np.isfinite(self.images).all():
            raise ValueError("images contain non-finite values")
        if self.images.size and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise ValueError("images must be scaled to [0, 1]")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels out of range [0, {self.num_classes})")

    def __len__(self):
        return self.images.shape[0]

    @property
    def sample_shape(self):
        return self.images.shape[1:]


def _read_be_u32(data, offset, path):
    if offset + 4 > len(data):
        raise ValueError(f"{path}: truncated header at byte {offset}")
    return struct.unpack_from(">I", data, offset)[0]


def read_idx(path):
    """Read one IDX file (big-endian magic, dims, raw ubyte payload)."""
    with open(path, "rb") as f:
        data = f.read()
    magic = _read_be_u32(data, 0, path)
    if magic == IDX_IMAGES_MAGIC:
        ndim = 3
    elif magic == IDX_LABELS_MAGIC:
        ndim = 1
    else:
        raise ValueError(f"{path}: bad IDX magic 0x{magic:08x} at byte 0")
    dims = [_read_be_u32(data, 4 + 4 * i, path) for i in range(ndim)]
    header = 4 + 4 * ndim
    expected = int(np.prod(dims))
    actual = len(data) - header
    if actual != expected:
        raise ValueError(f"{path}: payload at byte {header} has {actual} bytes, expected {expected}")
    return np.frombuffer(data, dtype=np.uint8, offset=header).reshape(dims)


def load_idx(images_path, labels_path, name="idx"):
    """Load an IDX image/label file pair; pixels are scaled by 1/255."""
    images = read_idx(images_path)
    labels = read_idx(labels_path)
    if images.ndim != 3:
        raise ValueError(f"{images_path}: expected an image file, got {images.ndim} dims")
    if labels.ndim != 1:
        raise ValueError(f"{labels_path}: expected a label file, got {labels.ndim} dims")
    if images.shape[0] != labels.shape[0]:
        raise ValueError(
            f"image count {images.shape[0]} ({images_path}) != label count {labels.shape[0]} ({labels_path})"
        )
    n, h, w = images.shape
    num_classes = int(labels.max()) + 1 if labels.size else 2
    return Dataset(images.reshape(n, 1, h, w) / 255.0, labels, name, max(num_classes, 2))


def write_idx_images(path, images_u8):
    """Write [N,H,W] uint8 images in IDX format."""
    images_u8 = np.ascontiguousarray(images_u8, dtype=np.uint8)
    n, h, w = images_u8.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, h, w))
        f.write(images_u8.tobytes())


def write_idx_labels(path, labels):
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, labels.shape[0]))
        f.write(labels.tobytes())


def load_cifar10_binary(path, max_per_class=None, name="cifar10"):
    """Load CIFAR-10 binary records (1 label byte + 3072 RGB-plane bytes).

    max_per_class caps each class for desk-scale subsets; records are
    taken in file order.
    """
    with open(path, "rb") as f:
        data = f.read()
    if len(data) == 0 or len(data) % CIFAR_RECORD_BYTES != 0:
        raise ValueError(f"{path}: size {len(data)} is not a positive multiple of {CIFAR_RECORD_BYTES}")
    records = np.frombuffer(data, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
    labels = records[:, 0].astype(np.int64)
    if labels.max() > 9:
        bad = int(np.argmax(labels > 9))
        raise ValueError(f"{path}: label {labels[bad]} out of range at record {bad} (byte {bad * CIFAR_RECORD_BYTES})")
    if max_per_class is not None:
        keep = []
        counts = {}
        for i, lab in enumerate(labels):
            if counts.get(int(lab), 0) < max_per_class:
                counts[int(lab)] = counts.get(int(lab), 0) + 1
                keep.append(i)
        records = records[keep]
        labels = labels[keep]
    images = records[:, 1:].reshape(-1, 3, 32, 32) / 255.0
    return Dataset(images, labels, name, 10)


def write_cifar10_binary(path, images_u8, labels):
    """Write [N,3,32,32] uint8 images and labels as CIFAR-10 binary records."""
    images_u8 = np.ascontiguousarray(images_u8, dtype=np.uint8)
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    n = images_u8.shape[0]
    with open(path, "wb") as f:
        for i in range(n):
            f.write(bytes([labels[i]]))
            f.write(images_u8[i].tobytes())


# Synthetic generator geometry; tuned so a small two-conv net can learn the
# task within ~100 epochs while leaving room for bad seeds to underperform.
IMAGE_SIZE = 15
NOISE_HIGH = 0.22
RING_RADIUS = (3.0, 4.6)
RING_SHARPNESS = 0.55
BLOB_SIGMA = (1.0, 2.2)
FEATURE_AMP = (0.55, 1.0)
CENTER_JITTER = 1.5


def synth_craters(n_pos, n_neg, seed):
    """Deterministic ring (positive) vs blob (negative) 15x15 dataset."""
    if n_pos < 1 or n_neg < 1:
        raise ValueError(f"counts must be >= 1, got n_pos={n_pos}, n_neg={n_neg}")
    rng = derive_stream(seed, "data_synth")
    yy, xx = np.mgrid[0:IMAGE_SIZE, 0:IMAGE_SIZE].astype(DTYPE)
    mid = (IMAGE_SIZE - 1) / 2.0
    images = np.empty((n_pos + n_neg, 1, IMAGE_SIZE, IMAGE_SIZE), dtype=DTYPE)
    labels = np.concatenate([np.ones(n_pos, dtype=np.int64), np.zeros(n_neg, dtype=np.int64)])
    for i in range(n_pos + n_neg):
        img = rng.uniform(0.0, NOISE_HIGH, size=(IMAGE_SIZE, IMAGE_SIZE))
        if i < n_pos:
            cy, cx = mid + rng.uniform(-CENTER_JITTER, CENTER_JITTER, size=2)
            radius = rng.uniform(*RING_RADIUS)
            amp = rng.uniform(*FEATURE_AMP)
            d = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
            img += amp * np.exp(-((d - radius) ** 2) / (2 * RING_SHARPNESS**2))
        else:
            for _ in range(int(rng.integers(1, 4))):
                cy, cx = rng.uniform(2.0, IMAGE_SIZE - 3.0, size=2)
                sigma = rng.uniform(*BLOB_SIGMA)
                amp = rng.uniform(*FEATURE_AMP)
                d2 = (yy - cy) ** 2 + (xx - cx) ** 2
                img += amp * np.exp(-d2 / (2 * sigma**2))
        images[i, 0] = np.clip(img, 0.0, 1.0)
    return Dataset(images, labels, f"synth(seed={seed})", 2)


def split_50_50(dataset, seed):
    """Stratified disjoint halves after a seeded shuffle.

    Per-class counts differ by at most 1 between halves (odd classes give
    the extra example to the train half).
    """
    if len(dataset) < 2:
        raise ValueError(f"need at least 2 examples to split, got {len(dataset)}")
    rng = derive_stream(seed, "data_split")
    train_idx, test_idx = [], []
    for c in range(dataset.num_classes):
        idx = np.flatnonzero(dataset.labels == c)
        idx = idx[rng.permutation(idx.size)]
        half = (idx.size + 1) // 2
        train_idx.append(idx[:half])
        test_idx.append(idx[half:])
    train_idx = np.concatenate(train_idx)
    test_idx = np.concatenate(test_idx)

    def subset(idx, split):
        return Dataset(dataset.images[idx], dataset.labels[idx], dataset.name, dataset.num_classes, split)

    return subset(train_idx, "train"), subset(test_idx, "test")


@dataclass
class BatchPlan:
    """Seeded batch schedule: epoch e's permutation is a pure function of
    (seed, e), so consuming one epoch never shifts another."""

    n: int
    epochs: int
    batch_size: int
    seed: int

    def __post_init__(self):
        if self.n < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError(f"invalid batch plan: n={self.n}, epochs={self.epochs}, batch_size={self.batch_size}")

    @property
    def batches_per_epoch(self):
        return (self.n + self.batch_size - 1) // self.batch_size

    @property
    def total_batches(self):
        return self.epochs * self.batches_per_epoch

    def permutation(self, epoch):
        return derive_stream(self.seed, "data_order", epoch).permutation(self.n)

    def batches(self, epoch):
        perm = self.permutation(epoch)
        for start in range(0, self.n, self.batch_size):
            yield perm[start : start + self.batch_size]
