"""Toy-scale training for one evaluation request.

Adam with learning-rate reduction on validation-loss plateau (factor 0.9
after 5 stale epochs), optional geometric augmentation, wall-clock phase
timing, and an FPS measurement over the validation set.
"""

from __future__ import annotations

import os
import time

import numpy as np
import torch
import torch.nn.functional as F

from .builder import BuildError, DiscoveredNet, count_params
from .datasets import DatasetError, load

LEARNING_RATE = 1e-3
PLATEAU_FACTOR = 0.9
PLATEAU_PATIENCE = 5


class TrainerError(Exception):
    """Anything that must surface as a protocol `error` message."""


def _seed() -> int:
    return int(os.environ.get("TRAINER_SEED", "0"))


def _augmenter():
    from torchvision import transforms  # imported only when augment is on

    return transforms.Compose([
        transforms.RandomHorizontalFlip(),
        transforms.RandomRotation(20),
        transforms.RandomAffine(degrees=0, translate=(0.1, 0.1),
                                scale=(0.9, 1.1), shear=10.0),
    ])


def _loss_fn(model: DiscoveredNet):
    if model.ends_with_softmax():
        return lambda out, y: F.nll_loss(torch.log(out.clamp_min(1e-9)), y)
    return F.cross_entropy


@torch.no_grad()
def _accuracy(model, x, y, batch_size) -> float:
    model.eval()
    hits = 0
    for start in range(0, len(x), batch_size):
        out = model(x[start:start + batch_size])
        hits += (out.argmax(dim=1) == y[start:start + batch_size]).sum().item()
    return hits / len(x)


def evaluate_request(request: dict, on_progress=None) -> dict:
    """Run one evaluate request; returns the protocol `metrics` object."""
    config = request.get("config", {})
    epochs = int(config.get("epochs", 0))
    if epochs < 1:
        raise TrainerError("epochs must be >= 1")
    batch_size = int(config.get("batch_size", 32))
    if batch_size < 1:
        raise TrainerError("batch_size must be >= 1")
    augment = bool(config.get("augment", False))
    dataset = str(config.get("dataset", "blobs"))

    seed = _seed()
    torch.manual_seed(seed)

    doc = request.get("arch")
    if not isinstance(doc, dict):
        raise TrainerError("request has no architecture document")
    try:
        model = DiscoveredNet(doc)
    except BuildError as exc:
        raise TrainerError(f"cannot build model: {exc}") from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise TrainerError(f"malformed document: {exc}") from exc

    if model.output_shape != (model.num_classes,):
        raise TrainerError(
            f"improper output shape {model.output_shape}, expected "
            f"({model.num_classes},) to classify {model.num_classes} classes"
        )

    try:
        x_train, y_train, x_val, y_val = load(
            dataset, model.input_shape, model.num_classes, seed
        )
    except DatasetError as exc:
        raise TrainerError(str(exc)) from exc

    # HWC arrays -> NCHW tensors
    to_t = lambda a: torch.from_numpy(np.ascontiguousarray(a.transpose(0, 3, 1, 2)))
    x_train, x_val = to_t(x_train), to_t(x_val)
    y_train, y_val = torch.from_numpy(y_train), torch.from_numpy(y_val)

    loss_fn = _loss_fn(model)
    optimizer = torch.optim.Adam(model.parameters(), lr=LEARNING_RATE)
    scheduler = torch.optim.lr_scheduler.ReduceLROnPlateau(
        optimizer, factor=PLATEAU_FACTOR, patience=PLATEAU_PATIENCE
    )
    aug = _augmenter() if augment else None
    generator = torch.Generator().manual_seed(seed)

    train_started = time.perf_counter()
    for epoch in range(1, epochs + 1):
        model.train()
        for index in torch.randperm(len(x_train), generator=generator).split(batch_size):
            if len(index) < 2:
                continue  # BatchNorm cannot normalize a single sample
            batch = x_train[index]
            if aug is not None:
                batch = aug(batch)
            optimizer.zero_grad()
            loss = loss_fn(model(batch), y_train[index])
            loss.backward()
            optimizer.step()

        model.eval()
        with torch.no_grad():
            val_loss = loss_fn(model(x_val), y_val).item()
        scheduler.step(val_loss)
        if on_progress is not None:
            on_progress(epoch,
                        _accuracy(model, x_train, y_train, batch_size),
                        _accuracy(model, x_val, y_val, batch_size))
    a1 = _accuracy(model, x_train, y_train, batch_size)
    train_hours = (time.perf_counter() - train_started) / 3600.0

    eval_started = time.perf_counter()
    a2 = _accuracy(model, x_val, y_val, batch_size)
    eval_elapsed = max(time.perf_counter() - eval_started, 1e-9)

    return {
        "a1": a1,
        "a2": a2,
        "e1_kwh": None,  # no power counters at toy scale; orchestrator estimates
        "e2_kwh": None,
        "train_hours": train_hours,
        "eval_hours": eval_elapsed / 3600.0,
        "fps": len(x_val) / eval_elapsed,
        "params": count_params(model),
    }
