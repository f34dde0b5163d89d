"""Entropy-weighted hybrid BCE + Dice loss with a plain-BCE warm-up."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import torch
import torch.nn.functional as F

LossFn = Callable[[torch.Tensor, torch.Tensor], torch.Tensor]


@dataclass
class LossConfig:
    beta: float = 0.3
    lambda_bce: float = 0.7
    lambda_dice: float = 0.3
    warmup_epochs: int = 3
    prob_clamp_eps: float = 1e-7
    dice_smooth: float = 1.0

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if abs(self.lambda_bce + self.lambda_dice - 1.0) > 1e-9:
            raise ValueError("lambda_bce + lambda_dice must equal 1")
        if self.warmup_epochs < 0:
            raise ValueError("warmup_epochs must be >= 0")


def pixel_entropy(p: torch.Tensor, eps: float = 1e-7) -> torch.Tensor:
    """Binary entropy in bits, clamped to [0, 1]."""
    p = p.clamp(eps, 1.0 - eps)
    h = -(p * torch.log2(p) + (1.0 - p) * torch.log2(1.0 - p))
    return h.clamp(0.0, 1.0)


def entropy_weight_map(p: torch.Tensor, beta: float = 0.3, eps: float = 1e-7) -> torch.Tensor:
    """``1 + beta * H(p)``, detached from the autograd graph."""
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    with torch.no_grad():
        return 1.0 + beta * pixel_entropy(p.detach(), eps)


def _check_shapes(a: torch.Tensor, b: torch.Tensor) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def weighted_bce(logits: torch.Tensor, target: torch.Tensor, weights: torch.Tensor | None = None) -> torch.Tensor:
    _check_shapes(logits, target)
    if weights is not None:
        _check_shapes(logits, weights)
    return F.binary_cross_entropy_with_logits(logits, target.to(logits.dtype), weight=weights)


def bce(logits: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    return weighted_bce(logits, target, None)


def dice_loss(p: torch.Tensor, target: torch.Tensor, smooth: float = 1.0) -> torch.Tensor:
    """Soft Dice loss aggregated over the whole batch."""
    _check_shapes(p, target)
    g = target.to(p.dtype)
    inter = (p * g).sum()
    return 1.0 - (2.0 * inter + smooth) / (p.sum() + g.sum() + smooth)


def hybrid_loss(logits: torch.Tensor, target: torch.Tensor, cfg: LossConfig | None = None) -> torch.Tensor:
    cfg = cfg or LossConfig()
    p = torch.sigmoid(logits)
    w = entropy_weight_map(p, cfg.beta, cfg.prob_clamp_eps)
    return cfg.lambda_bce * weighted_bce(logits, target, w) + cfg.lambda_dice * dice_loss(p, target, cfg.dice_smooth)


def active_loss(epoch: int, cfg: LossConfig | None = None) -> LossFn:
    """Loss for a zero-based ``epoch``: plain BCE during warm-up, hybrid afterwards."""
    cfg = cfg or LossConfig()
    if epoch < cfg.warmup_epochs:
        return bce
    return lambda logits, target: hybrid_loss(logits, target, cfg)
