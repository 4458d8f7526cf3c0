import os
import struct

import numpy as np
import pytest

from gpicl_lab.data_tasks.datasets import BaseDataset


def pytest_collection_modifyitems(config, items):
    if os.environ.get("GPICL_DESK") == "1":
        return
    skip_desk = pytest.mark.skip(reason="desk-scale run; set GPICL_DESK=1")
    for item in items:
        if "desk" in item.keywords:
            item.add_marker(skip_desk)


def write_idx(path, array: np.ndarray) -> None:
    array = np.asarray(array, dtype=np.uint8)
    magic = 0x00000800 | array.ndim
    header = struct.pack(">I", magic) + struct.pack(f">{array.ndim}I", *array.shape)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(header + array.tobytes())


def write_cifar(path, images: np.ndarray, labels: np.ndarray) -> None:
    records = np.concatenate(
        [np.asarray(labels, dtype=np.uint8)[:, None], np.asarray(images, dtype=np.uint8).reshape(len(labels), -1)],
        axis=1,
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(records.tobytes())


def write_emb(path, x: np.ndarray) -> None:
    x = np.asarray(x, dtype="<f4")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(b"EMB1" + struct.pack("<II", *x.shape) + x.tobytes())


@pytest.fixture
def idx_writer():
    return write_idx


@pytest.fixture
def cifar_writer():
    return write_cifar


@pytest.fixture
def emb_writer():
    return write_emb


@pytest.fixture
def data_dir(tmp_path):
    """MNIST- and FashionMNIST-shaped IDX files with 60 train / 30 test images."""
    rng = np.random.default_rng(0)
    root = tmp_path / "data"
    for name in ("mnist", "fashion_mnist"):
        for prefix, n in (("train", 60), ("t10k", 30)):
            write_idx(root / name / f"{prefix}-images-idx3-ubyte", rng.integers(0, 256, size=(n, 28, 28)))
            write_idx(root / name / f"{prefix}-labels-idx1-ubyte", np.arange(n) % 10)
    return root


@pytest.fixture
def tiny_base():
    rng = np.random.default_rng(1)
    return BaseDataset(
        name="tiny",
        split="train",
        inputs=rng.normal(size=(40, 6)).astype(np.float32),
        labels=(np.arange(40) % 10).astype(np.int64),
    )
