"""Uncertainty-guided dual attention (UGDA).

The block reweights a feature map by the product of a channel gate, a spatial
gate and ``1 + U`` where ``U`` is the sigmoid of the per-pixel standard
deviation across channels, and fuses the result residually:
``y = x + gamma * (x * A)``.
"""

from __future__ import annotations

from typing import NamedTuple

import torch
import torch.nn as nn


class AttentionComponents(NamedTuple):
    channel: torch.Tensor  # (N, C, 1, 1)
    spatial: torch.Tensor  # (N, 1, H, W)
    uncertainty: torch.Tensor  # (N, 1, H, W)


def uncertainty_map(x: torch.Tensor) -> torch.Tensor:
    """Sigmoid of the population std over channels, shape (N, 1, H, W).

    Values lie in [0.5, 1) because the std is non-negative.
    """
    if x.shape[1] < 2:
        raise ValueError(f"uncertainty map needs at least 2 channels, got {x.shape[1]}")
    return torch.sigmoid(x.std(dim=1, keepdim=True, correction=0))


class UGDA(nn.Module):
    """Uncertainty-guided dual attention block with a learnable residual scale.

    Args:
        channels: number of input channels ``C``.
        reduction: bottleneck ratio ``r`` of the channel gate; must divide ``C``.
        gamma_init: initial value of the residual scale.
    """

    def __init__(self, channels: int, reduction: int = 8, gamma_init: float = 0.1):
        super().__init__()
        if channels < 2:
            raise ValueError(f"UGDA needs at least 2 channels, got {channels}")
        if channels < reduction or channels % reduction:
            raise ValueError(f"reduction {reduction} must divide channel count {channels}")
        hidden = channels // reduction
        self.channel_fc = nn.Sequential(
            nn.Conv2d(channels, hidden, kernel_size=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(hidden, channels, kernel_size=1),
        )
        self.spatial_conv = nn.Conv2d(2, 1, kernel_size=7, padding=3)
        self.gamma = nn.Parameter(torch.tensor(float(gamma_init)))
        self.reset_parameters()

    def reset_parameters(self) -> None:
        for m in self.modules():
            if isinstance(m, nn.Conv2d):
                nn.init.xavier_uniform_(m.weight)
                nn.init.zeros_(m.bias)

    def channel_attention(self, x: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.channel_fc(x.mean(dim=(2, 3), keepdim=True)))

    def spatial_attention(self, x: torch.Tensor) -> torch.Tensor:
        pooled = torch.cat([x.mean(dim=1, keepdim=True), x.amax(dim=1, keepdim=True)], dim=1)
        return torch.sigmoid(self.spatial_conv(pooled))

    def components(self, x: torch.Tensor) -> AttentionComponents:
        return AttentionComponents(self.channel_attention(x), self.spatial_attention(x), uncertainty_map(x))

    def attention_map(self, x: torch.Tensor) -> torch.Tensor:
        ch, sp, unc = self.components(x)
        return ch * sp * (1.0 + unc)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if not torch.isfinite(x).all():
            raise ValueError("UGDA received non-finite input")
        return x + self.gamma * (x * self.attention_map(x))


def ugda_forward(x: torch.Tensor, module: UGDA) -> torch.Tensor:
    return module(x)
