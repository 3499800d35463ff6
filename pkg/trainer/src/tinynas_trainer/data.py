"""Dataset loading for the training phases.

Two sources:
  - ``cifar100``: torchvision CIFAR-100 from a local root (never downloaded
    here), optionally restricted to the first N classes for desk-scale runs;
  - ``synthetic``: a self-contained learnable stand-in — each class gets a
    fixed random template image and samples are noisy copies of it — so the
    full training path can run anywhere, with no files on disk.
"""
from __future__ import annotations

import torch
from torch.utils.data import TensorDataset


class DatasetMissingError(RuntimeError):
    pass


DEFAULT_SPEC = {
    "kind": "synthetic",
    "num_classes": 10,
    "train_size": 2000,
    "test_size": 500,
    "resolution": 32,
    "noise": 0.5,
}


def synthetic_dataset(
    num_classes: int,
    size: int,
    resolution: int,
    seed: int,
    noise: float = 0.5,
) -> TensorDataset:
    generator = torch.Generator().manual_seed(seed)
    # templates depend only on num_classes/resolution/class index, so train
    # and test splits (different seeds) share them
    template_gen = torch.Generator().manual_seed(num_classes * 7919 + resolution)
    templates = torch.randn(num_classes, 3, resolution, resolution, generator=template_gen)
    labels = torch.randint(0, num_classes, (size,), generator=generator)
    images = templates[labels] + noise * torch.randn(
        size, 3, resolution, resolution, generator=generator
    )
    return TensorDataset(images, labels)


def _cifar100(spec: dict, train: bool) -> TensorDataset:
    try:
        from torchvision.datasets import CIFAR100
    except ImportError as exc:  # pragma: no cover
        raise DatasetMissingError(f"torchvision unavailable: {exc}") from exc
    root = spec.get("root")
    if not root:
        raise DatasetMissingError("cifar100 needs a 'root' directory")
    try:
        raw = CIFAR100(root=root, train=train, download=False)
    except RuntimeError as exc:
        raise DatasetMissingError(str(exc)) from exc
    images = torch.from_numpy(raw.data).permute(0, 3, 1, 2).float() / 255.0
    labels = torch.tensor(raw.targets)
    num_classes = spec.get("num_classes", 100)
    if num_classes < 100:
        keep = labels < num_classes
        images, labels = images[keep], labels[keep]
    limit = spec.get("train_size" if train else "test_size")
    if limit:
        images, labels = images[:limit], labels[:limit]
    mean = torch.tensor([0.5071, 0.4865, 0.4409]).view(1, 3, 1, 1)
    std = torch.tensor([0.2673, 0.2564, 0.2762]).view(1, 3, 1, 1)
    return TensorDataset((images - mean) / std, labels)


def load_datasets(spec: dict | None, seed: int) -> tuple[TensorDataset, TensorDataset, int]:
    """Returns (train, test, num_classes) for a dataset spec document."""
    merged = dict(DEFAULT_SPEC)
    merged.update(spec or {})
    kind = merged["kind"]
    if kind == "synthetic":
        train = synthetic_dataset(
            merged["num_classes"],
            merged["train_size"],
            merged["resolution"],
            seed=seed,
            noise=merged["noise"],
        )
        test = synthetic_dataset(
            merged["num_classes"],
            merged["test_size"],
            merged["resolution"],
            seed=seed + 1,
            noise=merged["noise"],
        )
        return train, test, merged["num_classes"]
    if kind == "cifar100":
        return _cifar100(merged, True), _cifar100(merged, False), merged.get("num_classes", 100)
    raise DatasetMissingError(f"unknown dataset kind {kind!r}")
