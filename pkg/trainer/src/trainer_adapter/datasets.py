"""Datasets for the adapter: synthetic blobs (always available) and a
locally cached CIFAR-10.

Dataset identifiers: "blobs", "blobs:N", "cifar10", "cifar10:N" where N
limits the sample count (desk-scale runs).  CIFAR-10 is never downloaded
during an evaluation; acquisition is the explicit `fetch-data` command.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np


class DatasetError(Exception):
    pass


DEFAULT_CACHE = Path(os.environ.get(
    "TRAINER_DATA_DIR", Path.home() / ".cache" / "trainer-adapter"
))


def _parse_spec(dataset: str) -> tuple[str, int | None]:
    name, _, count = dataset.partition(":")
    if not count:
        return name, None
    try:
        n = int(count)
    except ValueError:
        raise DatasetError(f"bad dataset spec {dataset!r}") from None
    if n < 1:
        raise DatasetError(f"dataset size must be >= 1, got {n}")
    return name, n


def make_blobs(
    n_train: int, input_shape: tuple[int, int, int], num_classes: int,
    rng: np.random.Generator,
):
    """Separable per-class patterns plus noise, shaped to the architecture."""
    h, w, c = input_shape
    n_train = max(n_train, 2 * num_classes)
    n_val = max(n_train // 4, num_classes)
    patterns = rng.normal(0.0, 1.0, size=(num_classes, h, w, c)).astype(np.float32)

    def sample(n):
        labels = np.arange(n) % num_classes
        rng.shuffle(labels)
        noise = rng.normal(0.0, 0.6, size=(n, h, w, c)).astype(np.float32)
        x = patterns[labels] + noise
        return x, labels.astype(np.int64)

    x_train, y_train = sample(n_train)
    x_val, y_val = sample(n_val)
    return x_train, y_train, x_val, y_val


def _cifar_npz(cache_dir: Path) -> Path:
    return cache_dir / "cifar10.npz"


def load_cifar10(limit: int | None, cache_dir: Path = DEFAULT_CACHE):
    path = _cifar_npz(cache_dir)
    if not path.exists():
        raise DatasetError(
            f"cifar10 cache not found at {path}; run "
            "`python -m trainer_adapter fetch-data` first (needs network)"
        )
    with np.load(path) as data:
        x, y = data["x_train"], data["y_train"]
    if limit is not None:
        # round-robin over classes keeps the subset balanced
        picks = []
        by_class = {cls: list(np.flatnonzero(y == cls)) for cls in range(10)}
        while len(picks) < min(limit, len(y)):
            for cls in range(10):
                if by_class[cls] and len(picks) < limit:
                    picks.append(by_class[cls].pop(0))
        index = np.array(picks)
        x, y = x[index], y[index]
    x = x.astype(np.float32) / 255.0
    y = y.astype(np.int64)
    split = max(1, int(0.9 * len(y)))  # 9:1 train/validation
    return x[:split], y[:split], x[split:], y[split:]


def load(
    dataset: str,
    input_shape: tuple[int, int, int],
    num_classes: int,
    seed: int,
):
    """Return float32 HWC arrays (x_train, y_train, x_val, y_val)."""
    name, limit = _parse_spec(dataset)
    if name == "blobs":
        rng = np.random.default_rng(seed)
        return make_blobs(limit or 192, input_shape, num_classes, rng)
    if name == "cifar10":
        if tuple(input_shape) != (32, 32, 3) or num_classes != 10:
            raise DatasetError(
                "cifar10 needs input_shape [32, 32, 3] and 10 classes; "
                f"document declares {list(input_shape)} / {num_classes}"
            )
        return load_cifar10(limit)
    raise DatasetError(f"unknown dataset {name!r} (use blobs or cifar10)")


def fetch_cifar10(cache_dir: Path = DEFAULT_CACHE) -> Path:
    """Download CIFAR-10 via torchvision and store it as a single npz."""
    from torchvision.datasets import CIFAR10  # heavy import, fetch path only

    cache_dir.mkdir(parents=True, exist_ok=True)
    train = CIFAR10(root=str(cache_dir / "raw"), train=True, download=True)
    test = CIFAR10(root=str(cache_dir / "raw"), train=False, download=True)
    path = _cifar_npz(cache_dir)
    np.savez_compressed(
        path,
        x_train=np.asarray(train.data, dtype=np.uint8),
        y_train=np.asarray(train.targets, dtype=np.int64),
        x_test=np.asarray(test.data, dtype=np.uint8),
        y_test=np.asarray(test.targets, dtype=np.int64),
    )
    return path
