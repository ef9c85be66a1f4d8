"""Training loop for the end-to-end arbitrator.

Batches are homogeneous in device count (bucketed, no padding). The model
with the best validation accuracy across the run is returned.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .network import ArbitratorModel, ModelConfig, build_model


class TrainingError(RuntimeError):
    pass


class NumericError(TrainingError):
    """NaN/Inf encountered during optimization."""


@dataclass(frozen=True)
class Example:
    """One scenario: per-device LFBE images plus the closest-device label."""

    features: np.ndarray  # (n_devices, frames, bands) float32
    label: int
    scenario_id: str = ""


@dataclass(frozen=True)
class TrainHyper:
    epochs: int = 30
    learning_rate: float = 1e-3
    batch_size: int = 64
    weight_decay: float = 1e-4
    deterministic: bool = True
    model: ModelConfig = field(default_factory=ModelConfig)
    lr_schedule: str = "cosine"  # "cosine" (to 5% over `epochs`) or "constant"
    # train-time augmentation (evaluation always runs on clean features)
    augment: bool = True
    augment_gain_db: float = 10.0  # scenario-wide level offset, +- uniform
    # per-device gain jitter std; defaults to 0 because scrambling
    # inter-device level differences corrupts the very cue the labels follow
    augment_device_gain_db: float = 0.0
    augment_freq_mask: int = 8  # max masked mel bands per scenario
    augment_time_mask: int = 20  # max masked frames per scenario


_DB_TO_LOG_POWER = math.log(10.0) / 10.0


def _augment_batch(x: np.ndarray, hyper: TrainHyper,
                   rng: np.random.Generator) -> np.ndarray:
    """Level offsets and spectrogram masking on a (B, N, F, M) LFBE batch.

    A scenario-wide gain offset makes the arbitrator invariant to absolute
    speech level; small per-device offsets emulate microphone gain tolerance;
    frequency/time masks discourage memorizing individual utterances.
    """
    b, n, f, m = x.shape
    scen = rng.uniform(-hyper.augment_gain_db, hyper.augment_gain_db,
                       size=(b, 1, 1, 1))
    dev = rng.normal(0.0, hyper.augment_device_gain_db, size=(b, n, 1, 1))
    x = x + ((scen + dev) * _DB_TO_LOG_POWER).astype(np.float32)
    for i in range(b):
        fill = x[i].mean()
        if hyper.augment_freq_mask > 0:
            width = int(rng.integers(0, hyper.augment_freq_mask + 1))
            if width:
                lo = int(rng.integers(0, m - width + 1))
                x[i, :, :, lo:lo + width] = fill
        if hyper.augment_time_mask > 0:
            width = int(rng.integers(0, hyper.augment_time_mask + 1))
            if width:
                lo = int(rng.integers(0, f - width + 1))
                x[i, :, lo:lo + width, :] = fill
    return x


def _bucket_batches(examples: list[Example], batch_size: int,
                    rng: np.random.Generator) -> list[list[int]]:
    """Shuffled batch index lists, each homogeneous in device count."""
    buckets: dict[int, list[int]] = {}
    for i, ex in enumerate(examples):
        buckets.setdefault(ex.features.shape[0], []).append(i)
    batches = []
    for n in sorted(buckets):
        idx = np.array(buckets[n])
        rng.shuffle(idx)
        for k in range(0, len(idx), batch_size):
            batches.append(list(idx[k:k + batch_size]))
    order = rng.permutation(len(batches))
    return [batches[i] for i in order]


def _evaluate_accuracy(model: ArbitratorModel, examples: list[Example]) -> float:
    if not examples:
        return float("nan")
    correct = 0
    with torch.no_grad():
        for ex in examples:
            x = torch.as_tensor(ex.features, dtype=torch.float32).unsqueeze(0)
            logits = model(x).squeeze(0)
            correct += int(torch.argmax(logits).item() == ex.label)
    return correct / len(examples)


def predict(model: ArbitratorModel, features: np.ndarray) -> int:
    """Arbitration decision for one scenario's (n_devices, frames, bands)."""
    with torch.no_grad():
        x = torch.as_tensor(features, dtype=torch.float32).unsqueeze(0)
        return int(torch.argmax(model(x).squeeze(0)).item())


def train(train_set: list[Example], val_set: list[Example],
          hyper: TrainHyper = TrainHyper(), rng_seed: int = 0,
          initial_model: ArbitratorModel | None = None, start_epoch: int = 0,
          ) -> tuple[ArbitratorModel, list[dict]]:
    """Adam + cross-entropy training; returns (best-val model, epoch log)."""
    if not train_set:
        raise TrainingError("empty training set")
    if hyper.deterministic:
        torch.use_deterministic_algorithms(True)
    torch.manual_seed(rng_seed)
    model = initial_model if initial_model is not None \
        else build_model(hyper.model, seed=rng_seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=hyper.learning_rate,
                                 weight_decay=hyper.weight_decay)
    scheduler = None
    if hyper.lr_schedule == "cosine":
        # resumed runs re-anneal over their own `epochs` span
        scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(
            optimizer, T_max=hyper.epochs,
            eta_min=hyper.learning_rate * 0.05)
    elif hyper.lr_schedule != "constant":
        raise TrainingError(f"unknown lr_schedule {hyper.lr_schedule!r}")
    loss_fn = nn.CrossEntropyLoss()
    rng = np.random.default_rng(rng_seed)
    aug_rng = np.random.default_rng([rng_seed, 1])

    log: list[dict] = []
    best_state = copy.deepcopy(model.state_dict())
    best_val = -1.0
    best_epoch = -1
    for epoch in range(start_epoch, start_epoch + hyper.epochs):
        model.train()
        epoch_loss = 0.0
        n_batches = 0
        for batch in _bucket_batches(train_set, hyper.batch_size, rng):
            stacked = np.stack([train_set[i].features for i in batch])
            if hyper.augment:
                stacked = _augment_batch(stacked, hyper, aug_rng)
            x = torch.as_tensor(stacked, dtype=torch.float32)
            y = torch.as_tensor([train_set[i].label for i in batch])
            optimizer.zero_grad()
            loss = loss_fn(model(x), y)
            if not torch.isfinite(loss):
                raise NumericError(
                    f"non-finite loss at epoch {epoch}, batch {n_batches} "
                    f"(n_devices={x.shape[1]}, batch_size={len(batch)})")
            loss.backward()
            optimizer.step()
            epoch_loss += float(loss.detach())
            n_batches += 1
        if scheduler is not None:
            scheduler.step()

        model.eval()
        # train accuracy is a monitoring metric; cap its cost on large sets
        train_acc = _evaluate_accuracy(model, train_set[:2000])
        val_acc = _evaluate_accuracy(model, val_set)
        log.append({
            "epoch": epoch,
            "train_loss": epoch_loss / max(n_batches, 1),
            "train_accuracy": train_acc,
            "val_accuracy": val_acc,
        })
        if val_set and val_acc > best_val:
            best_val = val_acc
            best_epoch = epoch
            best_state = copy.deepcopy(model.state_dict())

    if val_set:
        model.load_state_dict(best_state)
    model.eval()
    model.best_val_accuracy = best_val if val_set else None
    model.best_epoch = best_epoch if val_set else None
    return model, log


# --- Checkpoint format: JSON manifest + raw float32 blobs ------------------

def save_checkpoint(directory, model: ArbitratorModel, hyper: TrainHyper,
                    config_hash: str = "", extra: dict | None = None) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tensors = {}
    for name, tensor in model.state_dict().items():
        blob = f"{name}.bin"
        tensor.numpy().astype("<f4").tofile(directory / blob)
        tensors[name] = {"file": blob,
                         "shape": list(tensor.shape)}
    manifest = {
        "architecture": {
            "conv_channels": list(model.config.conv_channels),
            "embed_dim": model.config.embed_dim,
            "classifier_hidden": model.config.classifier_hidden,
            "linear_only": model.config.linear_only,
        },
        "param_count": model.param_count,
        "hyper": {
            "epochs": hyper.epochs,
            "learning_rate": hyper.learning_rate,
            "batch_size": hyper.batch_size,
            "weight_decay": hyper.weight_decay,
        },
        "best_val_accuracy": getattr(model, "best_val_accuracy", None),
        "best_epoch": getattr(model, "best_epoch", None),
        "config_hash": config_hash,
        "tensors": tensors,
    }
    if extra:
        manifest.update(extra)
    with open(directory / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2)


def load_checkpoint(directory) -> tuple[ArbitratorModel, dict]:
    directory = Path(directory)
    with open(directory / "manifest.json") as f:
        manifest = json.load(f)
    arch = manifest["architecture"]
    config = ModelConfig(conv_channels=tuple(arch["conv_channels"]),
                         embed_dim=arch["embed_dim"],
                         classifier_hidden=arch["classifier_hidden"],
                         linear_only=arch["linear_only"])
    model = ArbitratorModel(config)
    state = {}
    for name, meta in manifest["tensors"].items():
        data = np.fromfile(directory / meta["file"], dtype="<f4")
        state[name] = torch.as_tensor(
            data.reshape(meta["shape"]).astype(np.float32))
    model.load_state_dict(state)
    model.eval()
    return model, manifest
