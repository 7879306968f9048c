"""MNIST IDX files, batching, and a synthetic stand-in for quick runs."""

from __future__ import annotations

import gzip
import hashlib
import logging
import os
import struct
import tempfile
import urllib.error
import urllib.request
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}
DEFAULT_BASE_URL = "https://storage.googleapis.com/cvdf-datasets/mnist/"


class DataError(Exception):
    pass


class IdxFormatError(DataError):
    pass


class IdxLengthError(DataError):
    pass


class FetchError(DataError):
    """Download failed; safe to retry."""


class IntegrityError(DataError):
    pass


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray  # N x 784, float64 in [0, 1]
    labels: np.ndarray  # N, int64

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise DataError("image and label counts differ")

    def __len__(self) -> int:
        return int(self.labels.shape[0])


def parse_idx(raw: bytes) -> np.ndarray:
    """Decode an unsigned-byte IDX container (magic 0x0801 or 0x0803)."""
    if len(raw) < 4:
        raise IdxLengthError("file shorter than the IDX magic")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic not in (IMAGES_MAGIC, LABELS_MAGIC):
        raise IdxFormatError(f"unsupported IDX magic 0x{magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IdxLengthError("truncated IDX header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    expected = int(np.prod(dims, dtype=np.int64))
    payload = len(raw) - header
    if payload != expected:
        raise IdxLengthError(f"IDX payload has {payload} bytes, dims {dims} need {expected}")
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def serialize_idx(array: np.ndarray) -> bytes:
    array = np.asarray(array, dtype=np.uint8)
    magic = 0x00000800 | array.ndim
    if magic not in (IMAGES_MAGIC, LABELS_MAGIC):
        raise IdxFormatError("only 1-D labels and 3-D images are supported")
    return struct.pack(f">I{array.ndim}I", magic, *array.shape) + array.tobytes()


def _read_idx_file(directory: Path, name: str) -> np.ndarray:
    path = directory / name
    if path.exists():
        return parse_idx(path.read_bytes())
    gz = directory / (name + ".gz")
    if gz.exists():
        return parse_idx(gzip.decompress(gz.read_bytes()))
    raise DataError(f"missing MNIST file {name} in {directory}")


def _to_dataset(images: np.ndarray, labels: np.ndarray) -> Dataset:
    flat = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(flat, labels.astype(np.int64))


def load_mnist(directory) -> tuple[Dataset, Dataset]:
    """Load ``(train, test)``; pixels are scaled by 1/255, images flattened."""
    directory = Path(directory)
    arrays = {key: _read_idx_file(directory, name) for key, name in FILES.items()}
    train = _to_dataset(arrays["train_images"], arrays["train_labels"])
    test = _to_dataset(arrays["test_images"], arrays["test_labels"])
    return train, test


def read_checksums(path=None) -> dict[str, str]:
    if path is None:
        text = resources.files("neaf").joinpath("checksums.txt").read_text()
    else:
        text = Path(path).read_text()
    sums = {}
    for line in text.splitlines():
        if line.strip():
            digest, name = line.split()
            sums[name] = digest.lower()
    return sums


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def fetch_mnist(base_url: str = DEFAULT_BASE_URL, directory=".", checksums=None, timeout: float = 60.0) -> list[Path]:
    """Download, decompress and verify the four MNIST files into ``directory``.

    Files already present with the pinned checksum are left alone. Each file is
    written to a temporary name and renamed only once verified.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    sums = read_checksums(checksums)
    if not base_url.endswith("/"):
        base_url += "/"

    paths = []
    for name in FILES.values():
        target = directory / name
        paths.append(target)
        if target.exists():
            if _sha256(target.read_bytes()) == sums[name]:
                continue
            log.warning("%s has an unexpected checksum, downloading again", target)

        url = base_url + name + ".gz"
        log.info("fetching %s", url)
        try:
            with urllib.request.urlopen(url, timeout=timeout) as resp:
                compressed = resp.read()
        except (urllib.error.URLError, OSError) as exc:
            raise FetchError(f"could not download {url}: {exc}") from exc
        try:
            raw = gzip.decompress(compressed)
        except (OSError, EOFError) as exc:
            raise IntegrityError(f"{url} is not valid gzip data") from exc

        fd, tmp = tempfile.mkstemp(dir=directory, prefix=f".{name}.", suffix=".part")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(raw)
            digest = _sha256(raw)
            if digest != sums[name]:
                raise IntegrityError(f"{name}: sha256 {digest} does not match {sums[name]}")
            os.replace(tmp, target)
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)
    return paths


def epoch_batches(ds: Dataset, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Index arrays for one epoch: a fresh permutation cut into batches.

    The final short batch is kept.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = rng.permutation(len(ds))
    return [order[i:i + batch_size] for i in range(0, len(order), batch_size)]


def make_synthetic(n: int, classes: int, rng: np.random.Generator, dim: int = 784, noise: float = 0.15) -> Dataset:
    """Balanced, well-separated Gaussian blobs clipped to [0, 1].

    Each class gets a sparse random prototype (about a quarter of the pixels
    lit), roughly the ink density of a handwritten digit.
    """
    if n < classes:
        raise ValueError("need at least one sample per class")
    lit = rng.random((classes, dim)) < 0.25
    centers = np.where(lit, rng.uniform(0.5, 1.0, (classes, dim)), 0.0)
    labels = rng.permutation(np.arange(n) % classes)
    images = centers[labels] + noise * rng.standard_normal((n, dim))
    return Dataset(np.clip(images, 0.0, 1.0), labels.astype(np.int64))
