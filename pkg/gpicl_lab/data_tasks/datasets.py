"""
Base datasets: IDX, CIFAR-10 binary, EMB1 embeddings and the synthetic random set.

Every loader returns a BaseDataset with flattened float32 inputs. Image
loaders optionally mean-pool to a square target resolution first; all of
them z-normalize with statistics fitted on the train split.
"""
import functools
import gzip
import logging
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from gpicl_lab.errors import ConfigError, FormatError
from gpicl_lab.schemas import DataConfig
from gpicl_lab.tensor_engine.rng import stream_generator

logger = logging.getLogger(__name__)

NUM_CLASSES = 10

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD = 1 + 3 * 32 * 32
EMB_MAGIC = b"EMB1"

IDX_BASES = ("mnist", "fashion_mnist", "kmnist", "svhn")
IDX_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
CIFAR_FILES = {
    "train": tuple(f"data_batch_{i}.bin" for i in range(1, 6)),
    "test": ("test_batch.bin",),
}

# Training base -> base used for the unseen-dataset regime when eval_dataset=auto
UNSEEN_DEFAULTS = {
    "mnist": "fashion_mnist",
    "fashion_mnist": "mnist",
    "kmnist": "mnist",
    "svhn": "mnist",
    "cifar10": "mnist",
}


@dataclass(frozen=True)
class NormStats:
    mean: float
    std: float


@dataclass(frozen=True)
class BaseDataset:
    name: str
    split: str
    inputs: np.ndarray
    labels: np.ndarray
    num_classes: int = NUM_CLASSES
    stats: NormStats | None = None

    def __post_init__(self):
        if self.inputs.ndim != 2 or self.inputs.shape[0] != self.labels.shape[0]:
            raise FormatError(
                f"{self.name}/{self.split}: {self.inputs.shape[0]} inputs vs {self.labels.shape[0]} labels"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise FormatError(f"{self.name}/{self.split}: label outside [0, {self.num_classes})")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]


# --- normalization ---
def fit_normalization(x: np.ndarray) -> NormStats:
    """Mean and standard deviation across all examples and pixels."""
    x64 = np.asarray(x, dtype=np.float64)
    std = float(x64.std())
    return NormStats(mean=float(x64.mean()), std=std if std > 0 else 1.0)


def apply_normalization(x: np.ndarray, stats: NormStats) -> np.ndarray:
    return ((np.asarray(x, dtype=np.float64) - stats.mean) / stats.std).astype(np.float32)


def _finish(
    name: str,
    split: str,
    x: np.ndarray,
    labels: np.ndarray,
    normalize: bool,
    stats: NormStats | None,
) -> BaseDataset:
    if normalize:
        stats = stats or fit_normalization(x)
        x = apply_normalization(x, stats)
    else:
        stats = None
        x = np.asarray(x, dtype=np.float32)
    logger.info(f"Loaded {name}/{split}: N={x.shape[0]}, N_x={x.shape[1]}")
    return BaseDataset(name=name, split=split, inputs=x, labels=labels.astype(np.int64), stats=stats)


# --- spatial pooling ---
def block_edges(size: int, target: int) -> np.ndarray:
    """
    Block boundaries for pooling `size` pixels into `target` blocks.

    Edge i sits at ceil(i * size / target), so for 28 -> 8 the blocks hold
    4, 3, 4, 3, ... pixels and the first block covers rows 0..3.
    """
    if target > size:
        raise ConfigError(f"Cannot upsample {size} pixels to {target}")
    return -((-np.arange(target + 1) * size) // target)


def downscale(images: np.ndarray, target: int | None) -> np.ndarray:
    """Block mean pooling over the last two axes of [..., H, W]."""
    if target is None or (images.shape[-2] == target and images.shape[-1] == target):
        return np.asarray(images, dtype=np.float64)
    out = np.asarray(images, dtype=np.float64)
    for axis in (-2, -1):
        edges = block_edges(out.shape[axis], target)
        sums = np.add.reduceat(out, edges[:-1], axis=axis)
        shape = [1] * out.ndim
        shape[axis] = target
        out = sums / np.diff(edges).reshape(shape)
    return out


# --- IDX ---
def _read_bytes(path: Path) -> bytes:
    path = Path(path)
    if path.exists():
        return path.read_bytes()
    gz = path.with_name(path.name + ".gz")
    if gz.exists():
        return gzip.decompress(gz.read_bytes())
    raise ConfigError(f"Missing dataset file: {path}")


def read_idx(buf: bytes, expected_magic: int, what: str) -> np.ndarray:
    if len(buf) < 4:
        raise FormatError(f"{what}: file shorter than the IDX magic")
    (magic,) = struct.unpack(">I", buf[:4])
    if magic != expected_magic:
        raise FormatError(f"{what}: bad IDX magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(buf) < header:
        raise FormatError(f"{what}: truncated IDX header")
    dims = struct.unpack(f">{ndim}I", buf[4:header])
    expected = int(np.prod(dims))
    if len(buf) - header != expected:
        raise FormatError(f"{what}: payload has {len(buf) - header} bytes, dims {dims} need {expected}")
    return np.frombuffer(buf, dtype=np.uint8, offset=header).reshape(dims)


def load_idx(
    path_images: Path | str,
    path_labels: Path | str,
    name: str = "idx",
    split: str = "train",
    resolution: int | None = None,
    normalize: bool = True,
    stats: NormStats | None = None,
) -> BaseDataset:
    images = read_idx(_read_bytes(Path(path_images)), IDX_IMAGES_MAGIC, str(path_images))
    labels = read_idx(_read_bytes(Path(path_labels)), IDX_LABELS_MAGIC, str(path_labels))
    if images.shape[0] != labels.shape[0]:
        raise FormatError(f"{name}/{split}: {images.shape[0]} images but {labels.shape[0]} labels")
    x = downscale(images.astype(np.float64) / 255.0, resolution)
    return _finish(name, split, x.reshape(x.shape[0], -1), labels, normalize, stats)


# --- CIFAR-10 binary ---
def read_cifar_records(buf: bytes, what: str) -> tuple[np.ndarray, np.ndarray]:
    if len(buf) % CIFAR_RECORD:
        raise FormatError(f"{what}: length {len(buf)} is not a multiple of {CIFAR_RECORD}")
    records = np.frombuffer(buf, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    return records[:, 1:].reshape(-1, 3, 32, 32), records[:, 0]


def load_cifar_binary(
    paths: Sequence[Path | str],
    name: str = "cifar10",
    split: str = "train",
    resolution: int | None = None,
    grayscale: bool = False,
    normalize: bool = True,
    stats: NormStats | None = None,
) -> BaseDataset:
    images, labels = [], []
    for path in paths:
        x, y = read_cifar_records(_read_bytes(Path(path)), str(path))
        images.append(x)
        labels.append(y)
    x = np.concatenate(images).astype(np.float64) / 255.0
    if grayscale:
        x = x.mean(axis=1, keepdims=True)
    x = downscale(x, resolution)
    return _finish(name, split, x.reshape(x.shape[0], -1), np.concatenate(labels), normalize, stats)


# --- EMB1 embeddings ---
def read_embeddings(buf: bytes, what: str) -> np.ndarray:
    if len(buf) < 12 or buf[:4] != EMB_MAGIC:
        raise FormatError(f"{what}: bad EMB1 magic")
    count, dim = struct.unpack("<II", buf[4:12])
    if len(buf) - 12 != count * dim * 4:
        raise FormatError(f"{what}: payload has {len(buf) - 12} bytes, header promises {count}x{dim} f32")
    return np.frombuffer(buf, dtype="<f4", offset=12).reshape(count, dim)


def load_embeddings(
    path: Path | str,
    path_labels: Path | str,
    name: str = "emb",
    split: str = "train",
    normalize: bool = True,
    stats: NormStats | None = None,
) -> BaseDataset:
    x = read_embeddings(_read_bytes(Path(path)), str(path))
    labels = read_idx(_read_bytes(Path(path_labels)), IDX_LABELS_MAGIC, str(path_labels))
    if labels.shape[0] != x.shape[0]:
        raise FormatError(f"{name}/{split}: {x.shape[0]} embeddings but {labels.shape[0]} labels")
    return _finish(name, split, x.astype(np.float64), labels, normalize, stats)


# --- synthetic ---
def make_random_dataset(
    seed: int,
    n_points: int = 10,
    input_dim: int = 64,
    num_classes: int = NUM_CLASSES,
    normalize: bool = True,
) -> BaseDataset:
    """Uniform [0, 1) inputs with uniform categorical labels."""
    if n_points < 1:
        raise ConfigError(f"n_points must be >= 1, got {n_points}")
    rng = stream_generator(seed, "random_dataset", n_points, input_dim)
    x = rng.random((n_points, input_dim))
    labels = rng.integers(0, num_classes, size=n_points)
    if normalize:
        x = apply_normalization(x, fit_normalization(x))
    return BaseDataset(
        name="random",
        split="train",
        inputs=np.asarray(x, dtype=np.float32),
        labels=labels.astype(np.int64),
        num_classes=num_classes,
    )


# --- named bases ---
def resolve_data_dir(data: DataConfig) -> Path:
    return Path(os.environ.get("GPICL_DATA_DIR") or data.data_dir)


def resolve_eval_dataset(data: DataConfig) -> str | None:
    if data.eval_dataset == "auto":
        return UNSEEN_DEFAULTS.get(data.dataset)
    if data.eval_dataset.lower() in ("none", ""):
        return None
    return data.eval_dataset


def load_base(data: DataConfig, name: str, split: str, input_dim: int | None = None, seed: int = 0) -> BaseDataset:
    """
    Loads one split of a named base; statistics always come from its train split.

    input_dim is required for the random base and checked against every other.
    """
    return _load_base_cached(
        str(resolve_data_dir(data)),
        name,
        split,
        data.resolution,
        data.grayscale,
        data.normalize,
        input_dim,
        seed,
    )


@functools.lru_cache(maxsize=16)
def _load_base_cached(
    data_dir: str,
    name: str,
    split: str,
    resolution: int | None,
    grayscale: bool,
    normalize: bool,
    input_dim: int | None,
    seed: int,
) -> BaseDataset:
    if split not in ("train", "test"):
        raise ConfigError(f"Unknown split {split!r}")
    root = Path(data_dir)

    if name == "random":
        ds = make_random_dataset(seed, input_dim=input_dim or 64, normalize=normalize)
        return BaseDataset(name=ds.name, split=split, inputs=ds.inputs, labels=ds.labels)

    if name in IDX_BASES:
        folder = root / name

        def loader(s: str, stats: NormStats | None) -> BaseDataset:
            images, labels = IDX_FILES[s]
            return load_idx(folder / images, folder / labels, name, s, resolution, normalize, stats)

    elif name == "cifar10":
        folder = root / "cifar10"

        def loader(s: str, stats: NormStats | None) -> BaseDataset:
            paths = [folder / f for f in CIFAR_FILES[s]]
            return load_cifar_binary(paths, name, s, resolution, grayscale, normalize, stats)

    elif name.startswith("emb:"):
        folder = root / "embeddings"
        stem = name.split(":", 1)[1]

        def loader(s: str, stats: NormStats | None) -> BaseDataset:
            return load_embeddings(
                folder / f"{stem}-{s}.emb", folder / f"{stem}-{s}-labels-idx1-ubyte", name, s, normalize, stats
            )

    else:
        raise ConfigError(
            f"Unknown dataset {name!r}; expected one of {', '.join(IDX_BASES)}, cifar10, random, emb:<name>"
        )

    train = loader("train", None)
    ds = train if split == "train" else loader("test", train.stats)
    if ds.num_classes != NUM_CLASSES:
        raise ConfigError(f"{name}: only {NUM_CLASSES}-class bases are supported")
    if input_dim is not None and ds.input_dim != input_dim:
        raise ConfigError(f"{name}: N_x={ds.input_dim} differs from the run's N_x={input_dim}")
    return ds
