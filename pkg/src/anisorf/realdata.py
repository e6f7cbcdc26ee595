"""Real-image pipelines: binary parsers and the preprocessing chain.

IDX files (big-endian magic 0x00000803 for uint8 image cubes, 0x00000801 for
label vectors) and CIFAR-10 binary batches (3073-byte records: one label byte
followed by 1024 R, 1024 G, 1024 B bytes, row-major) are parsed bit-exactly.
The preprocessing chain is downscale -> PCA -> per-feature saliency rescale ->
binary task -> optional label corruption.
"""

from __future__ import annotations

import gzip
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (DegenerateFeatureError, IdxMagicError, ParameterError,
                     ParseError, TruncatedStreamError)

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
CIFAR_RECORD_BYTES = 3073

MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


@dataclass(frozen=True)
class ImageTensor:
    """Pixel data normalized to [0, 1] plus integer class labels."""

    data: np.ndarray            # count x H x W (x channels)
    labels: np.ndarray          # count, dtype int


@dataclass(frozen=True)
class PcaBasis:
    mean: np.ndarray            # D_in
    components: np.ndarray      # D x D_in, rows orthonormal
    stds: np.ndarray            # D, per-component training std, sorted descending


def parse_idx(data: bytes):
    """Parse one IDX stream: image files yield a normalized array, label files
    a validated integer vector."""
    if len(data) < 8:
        raise TruncatedStreamError(f"IDX header needs 8 bytes, got {len(data)}")
    magic = struct.unpack(">I", data[:4])[0]
    if magic == IDX_LABEL_MAGIC:
        count = struct.unpack(">I", data[4:8])[0]
        payload = data[8:]
        if len(payload) < count:
            raise TruncatedStreamError(
                f"label payload holds {len(payload)} bytes for {count} entries")
        if len(payload) > count:
            raise ParseError(f"{len(payload) - count} trailing bytes after labels")
        labels = np.frombuffer(payload, dtype=np.uint8).astype(np.int64)
        if labels.size and labels.max() > 9:
            raise ParseError(f"label value {labels.max()} outside the 0-9 range")
        return labels
    if magic == IDX_IMAGE_MAGIC:
        if len(data) < 16:
            raise TruncatedStreamError("image header needs 16 bytes")
        count, height, width = struct.unpack(">III", data[4:16])
        expected = count * height * width
        payload = data[16:]
        if len(payload) < expected:
            raise TruncatedStreamError(
                f"image payload holds {len(payload)} bytes, header declares {expected}")
        if len(payload) > expected:
            raise ParseError(f"{len(payload) - expected} trailing bytes after images")
        pixels = np.frombuffer(payload, dtype=np.uint8).astype(np.float64) / 255.0
        return pixels.reshape(count, height, width)
    raise IdxMagicError(f"unsupported IDX magic 0x{magic:08x}")


def parse_cifar10_bin(data: bytes) -> ImageTensor:
    if len(data) % CIFAR_RECORD_BYTES != 0:
        raise ParseError(
            f"CIFAR-10 batch length {len(data)} is not a multiple of {CIFAR_RECORD_BYTES}")
    count = len(data) // CIFAR_RECORD_BYTES
    raw = np.frombuffer(data, dtype=np.uint8).reshape(count, CIFAR_RECORD_BYTES)
    labels = raw[:, 0].astype(np.int64)
    if count and labels.max() > 9:
        raise ParseError(f"label value {labels.max()} outside the 0-9 range")
    pixels = raw[:, 1:].reshape(count, 3, 32, 32).transpose(0, 2, 3, 1)
    return ImageTensor(data=pixels.astype(np.float64) / 255.0, labels=labels)


def _read_maybe_gzip(path: Path) -> bytes:
    blob = Path(path).read_bytes()
    if blob[:2] == b"\x1f\x8b":
        return gzip.decompress(blob)
    return blob


def load_idx_file(path) -> np.ndarray:
    """parse_idx on a file, transparently gunzipping."""
    return parse_idx(_read_maybe_gzip(Path(path)))


def load_mnist(data_dir) -> tuple[ImageTensor, ImageTensor]:
    """Standard four-file MNIST layout; each file may carry a .gz suffix."""
    data_dir = Path(data_dir)

    def find(stem: str) -> Path:
        for cand in (data_dir / stem, data_dir / (stem + ".gz")):
            if cand.exists():
                return cand
        raise FileNotFoundError(f"missing MNIST file {stem}[.gz] under {data_dir}")

    out = []
    for split in ("train", "test"):
        images = load_idx_file(find(MNIST_FILES[f"{split}_images"]))
        labels = load_idx_file(find(MNIST_FILES[f"{split}_labels"]))
        if images.shape[0] != labels.shape[0]:
            raise ParseError("image and label counts disagree")
        out.append(ImageTensor(data=images, labels=labels))
    return out[0], out[1]


def load_cifar10(data_dir) -> tuple[ImageTensor, ImageTensor]:
    """data_batch_1..5 as the train split, test_batch as the test split."""
    data_dir = Path(data_dir)
    parts = []
    for k in range(1, 6):
        path = data_dir / f"data_batch_{k}.bin"
        if path.exists():
            parts.append(parse_cifar10_bin(_read_maybe_gzip(path)))
    if not parts:
        raise FileNotFoundError(f"no data_batch_*.bin under {data_dir}")
    train = ImageTensor(data=np.concatenate([p.data for p in parts]),
                        labels=np.concatenate([p.labels for p in parts]))
    test = parse_cifar10_bin(_read_maybe_gzip(data_dir / "test_batch.bin"))
    return train, test


def _pool_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic matrix averaging [i*n_in/n_out, (i+1)*n_in/n_out) per row;
    handles fractional cell boundaries exactly."""
    w = np.zeros((n_out, n_in))
    step = n_in / n_out
    for i in range(n_out):
        lo, hi = i * step, (i + 1) * step
        for k in range(int(np.floor(lo)), int(np.ceil(hi))):
            w[i, k] = min(hi, k + 1) - max(lo, k)
    return w / step


def downscale(tensor: ImageTensor, out_h: int, out_w: int) -> ImageTensor:
    """Area-average pooling; color images are averaged to grayscale first."""
    data = tensor.data
    if data.ndim == 4:
        data = data.mean(axis=3)
    n, h, w = data.shape
    if out_h > h or out_w > w:
        raise ParameterError("output dimensions must not exceed input dimensions")
    wh = _pool_matrix(h, out_h)
    ww = _pool_matrix(w, out_w)
    pooled = np.einsum("ij,njk,lk->nil", wh, data, ww, optimize=True)
    return ImageTensor(data=pooled, labels=tensor.labels)


def pca_fit(train_inputs: np.ndarray) -> PcaBasis:
    """Centered SVD basis with components sorted by training variance."""
    x = np.asarray(train_inputs, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ParameterError("PCA needs a 2-D array with at least two samples")
    mean = x.mean(axis=0)
    _, singular, vt = np.linalg.svd(x - mean, full_matrices=False)
    stds = singular / np.sqrt(x.shape[0])
    rank = int(np.sum(singular > singular[0] * 1e-12)) if singular.size else 0
    if rank < vt.shape[0]:
        warnings.warn(f"training data has rank {rank} < {vt.shape[0]}; "
                      "trailing components have zero variance", RuntimeWarning,
                      stacklevel=2)
    return PcaBasis(mean=mean, components=vt, stds=stds)


def pca_apply(basis: PcaBasis, inputs: np.ndarray, keep: int) -> np.ndarray:
    if keep > basis.components.shape[0]:
        raise ParameterError(f"cannot keep {keep} of {basis.components.shape[0]} components")
    x = np.asarray(inputs, dtype=float)
    return (x - basis.mean) @ basis.components[:keep].T


def saliency_rescale(features: np.ndarray, stds: np.ndarray, alpha: float) -> np.ndarray:
    """x_i -> x_i / std_i^alpha: alpha=0 leaves saliency alone, alpha=1 whitens,
    alpha>1 inverts the variance ordering."""
    stds = np.asarray(stds, dtype=float)
    if np.any(stds <= 0):
        raise DegenerateFeatureError("a feature column has zero training variance")
    return np.asarray(features, dtype=float) / stds ** alpha


def binary_task(labels: np.ndarray, task: str) -> tuple[np.ndarray, np.ndarray]:
    """Map class labels to +-1. Returns (pm1_labels, kept_indices): the parity
    task keeps every record, the plane-vs-car task keeps classes 0 and 1 only."""
    labels = np.asarray(labels)
    if task == "mnist_parity":
        keep = np.arange(labels.size)
        return np.where(labels % 2 == 0, 1.0, -1.0), keep
    if task == "cifar_planes_vs_cars":
        keep = np.flatnonzero((labels == 0) | (labels == 1))
        return np.where(labels[keep] == 0, 1.0, -1.0), keep
    raise ParameterError(f"unknown binary task {task!r}")


def corrupt_labels(labels: np.ndarray, fraction: float, seed: int) -> np.ndarray:
    """Replace a uniformly chosen fraction of labels with fair +-1 coin flips."""
    if not 0.0 <= fraction <= 1.0:
        raise ParameterError("fraction must lie in [0, 1]")
    labels = np.asarray(labels, dtype=float).copy()
    count = int(round(fraction * labels.size))
    if count:
        rng = np.random.default_rng([int(seed), 5])
        chosen = rng.choice(labels.size, size=count, replace=False)
        labels[chosen] = np.where(rng.random(count) < 0.5, 1.0, -1.0)
    return labels
