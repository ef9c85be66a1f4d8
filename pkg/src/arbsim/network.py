"""End-to-end neural arbitrator.

A shared per-device convolutional feature extractor maps each 201x64 LFBE
image to a 128-dim embedding; a permutation-equivariant set classifier scores
device j from (z_j, sum_i z_i) and a softmax over the N logits yields the
arbitration probabilities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .features import N_FRAMES, N_MEL, LfbeImage


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    conv_channels: tuple[int, ...] = (16, 32, 48, 64, 64)
    embed_dim: int = 128
    classifier_hidden: int = 128
    linear_only: bool = False  # bypass ReLUs (gradient-check diagnostics)

    def small(self) -> "ModelConfig":
        """Reduced copy for finite-difference gradient checking."""
        return ModelConfig(conv_channels=(2, 2, 3, 3, 3), embed_dim=8,
                           classifier_hidden=8, linear_only=self.linear_only)


def _activation(config: ModelConfig) -> nn.Module:
    return nn.Identity() if config.linear_only else nn.ReLU()


class FeatureExtractor(nn.Module):
    """5 stride-2 3x3 conv stages, global average pool, FC to the embedding."""

    def __init__(self, config: ModelConfig = ModelConfig()):
        super().__init__()
        layers = []
        in_ch = 1
        for out_ch in config.conv_channels:
            layers.append(nn.Conv2d(in_ch, out_ch, kernel_size=3, stride=2,
                                    padding=1))
            layers.append(_activation(config))
            in_ch = out_ch
        self.conv = nn.Sequential(*layers)
        self.fc = nn.Linear(in_ch, config.embed_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # x: (batch, frames, bands) -> (batch, embed_dim)
        h = self.conv(x.unsqueeze(1))
        h = h.mean(dim=(2, 3))
        return self.fc(h)


class SetClassifier(nn.Module):
    """logit_j = g(concat(z_j, sum_i z_i)) with a shared two-layer g."""

    def __init__(self, config: ModelConfig = ModelConfig()):
        super().__init__()
        self.g = nn.Sequential(
            nn.Linear(2 * config.embed_dim, config.classifier_hidden),
            _activation(config),
            nn.Linear(config.classifier_hidden, 1),
        )

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        # z: (batch, n_devices, embed_dim) -> logits (batch, n_devices)
        pooled = z.sum(dim=1, keepdim=True).expand_as(z)
        return self.g(torch.cat([z, pooled], dim=-1)).squeeze(-1)


class ArbitratorModel(nn.Module):
    def __init__(self, config: ModelConfig = ModelConfig()):
        super().__init__()
        self.config = config
        self.extractor = FeatureExtractor(config)
        self.classifier = SetClassifier(config)
        self.apply(_init_he_uniform)

    @property
    def param_count(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        # features: (batch, n_devices, frames, bands) -> logits (batch, n_devices)
        b, n = features.shape[:2]
        flat = features.reshape(b * n, *features.shape[2:])
        z = self.extractor(flat).reshape(b, n, -1)
        return self.classifier(z)


def _init_he_uniform(module: nn.Module) -> None:
    if isinstance(module, (nn.Conv2d, nn.Linear)):
        nn.init.kaiming_uniform_(module.weight, a=math.sqrt(5))
        if module.bias is not None:
            nn.init.zeros_(module.bias)


def build_model(config: ModelConfig = ModelConfig(),
                seed: int = 0) -> ArbitratorModel:
    torch.manual_seed(seed)
    return ArbitratorModel(config)


@dataclass(frozen=True)
class ArbitrationOutput:
    logits: np.ndarray
    probabilities: np.ndarray


def extract_embedding(features: LfbeImage, model: ArbitratorModel) -> np.ndarray:
    if features.values.shape != (N_FRAMES, N_MEL):
        raise ModelError(f"bad feature shape {features.values.shape}")
    dtype = next(model.parameters()).dtype
    with torch.no_grad():
        x = torch.as_tensor(features.values, dtype=dtype).unsqueeze(0)
        return model.extractor(x).squeeze(0).numpy()


def classify(embeddings, model: ArbitratorModel) -> ArbitrationOutput:
    if len(embeddings) == 0:
        raise ModelError("empty embedding list")
    dtype = next(model.parameters()).dtype
    with torch.no_grad():
        z = torch.as_tensor(np.stack(embeddings), dtype=dtype).unsqueeze(0)
        logits = model.classifier(z).squeeze(0)
        probs = torch.softmax(logits, dim=0)
    return ArbitrationOutput(logits=logits.numpy(), probabilities=probs.numpy())


def gradient_check(model: ArbitratorModel, features: np.ndarray, label: int,
                   step: float = 1e-4) -> float:
    """Max relative error of autograd vs central finite differences.

    Runs in float64. ``features`` has shape (n_devices, frames, bands).
    Intended for small configs (every parameter element is perturbed).
    Perturbations that flip a ReLU activation sign are skipped: the loss is
    only piecewise differentiable and a central difference straddling a kink
    measures a subgradient mixture, not the analytic gradient.
    """
    model = model.double()
    x = torch.as_tensor(features, dtype=torch.float64).unsqueeze(0)
    target = torch.tensor([label])
    loss_fn = nn.CrossEntropyLoss()

    signs: list[torch.Tensor] = []
    hooks = [m.register_forward_pre_hook(
                 lambda mod, inp: signs.append(inp[0] > 0))
             for m in model.modules() if isinstance(m, nn.ReLU)]

    def evaluate() -> tuple[float, list[torch.Tensor]]:
        signs.clear()
        value = float(loss_fn(model(x), target))
        return value, list(signs)

    def same_pattern(a: list[torch.Tensor], b: list[torch.Tensor]) -> bool:
        return all(torch.equal(sa, sb) for sa, sb in zip(a, b))

    model.zero_grad()
    loss_fn(model(x), target).backward()

    max_rel = 0.0
    try:
        with torch.no_grad():
            _, base_pattern = evaluate()
            for param in model.parameters():
                flat = param.view(-1)
                gflat = param.grad.view(-1)
                for i in range(flat.numel()):
                    orig = flat[i].item()
                    flat[i] = orig + step
                    up, up_pattern = evaluate()
                    flat[i] = orig - step
                    down, down_pattern = evaluate()
                    flat[i] = orig
                    if not (same_pattern(up_pattern, base_pattern)
                            and same_pattern(down_pattern, base_pattern)):
                        continue
                    numeric = (up - down) / (2.0 * step)
                    analytic = gflat[i].item()
                    denom = max(abs(analytic), abs(numeric), 1.0)
                    max_rel = max(max_rel, abs(analytic - numeric) / denom)
    finally:
        for h in hooks:
            h.remove()
    return max_rel


def gradient_norm(model: ArbitratorModel, features: np.ndarray,
                  label: int) -> float:
    """L2 norm of the loss gradient over all parameters (float64)."""
    model = model.double()
    x = torch.as_tensor(features, dtype=torch.float64).unsqueeze(0)
    model.zero_grad()
    nn.CrossEntropyLoss()(model(x), torch.tensor([label])).backward()
    total = 0.0
    for p in model.parameters():
        total += float((p.grad ** 2).sum())
    return math.sqrt(total)
