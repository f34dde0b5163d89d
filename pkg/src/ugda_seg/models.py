"""ResNet-34 U-Net / LinkNet segmenters with optional UGDA and deep supervision."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import torch
import torch.nn as nn
import torch.nn.functional as F
from torchvision.models import resnet34, ResNet34_Weights

from .attention import UGDA

BACKBONES = ("unet", "linknet")
BACKBONE_LABELS = {"unet": "U-Net", "linknet": "LinkNet"}

# short name -> (use_attention, use_entropy_loss, use_deep_supervision); order is the table order
VARIANTS = {
    "baseline": (False, False, False),
    "loss": (False, True, False),
    "attn": (True, False, False),
    "ds": (False, False, True),
    "full": (True, True, True),
}
VARIANT_LABELS = {
    "baseline": "Baseline",
    "loss": "Loss-only",
    "attn": "Attention-only",
    "ds": "DS-only",
    "full": "UGDA-Net (Proposed)",
}

ENCODER_CHANNELS = (64, 64, 128, 256, 512)
ATTENTION_STAGES = (1, 2, 3, 4)  # zero-based: stages 2-5
AUX_STAGES = (3, 4)  # (shallow, deep): stages 4 and 5
MIN_SIDE = 32


@dataclass
class VariantConfig:
    backbone: str = "unet"
    use_attention: bool = False
    use_entropy_loss: bool = False
    use_deep_supervision: bool = False
    pretrained_encoder: bool = False

    def __post_init__(self):
        if self.backbone not in BACKBONES:
            raise ValueError(f"unknown backbone {self.backbone!r}; expected one of {BACKBONES}")

    @classmethod
    def from_name(cls, backbone: str, variant: str, pretrained_encoder: bool = False) -> "VariantConfig":
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}; expected one of {tuple(VARIANTS)}")
        attn, ent, ds = VARIANTS[variant]
        return cls(backbone, attn, ent, ds, pretrained_encoder)

    @property
    def name(self) -> str:
        flags = (self.use_attention, self.use_entropy_loss, self.use_deep_supervision)
        for k, v in VARIANTS.items():
            if v == flags:
                return k
        return "custom"

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ModelOutputs:
    main_logits: torch.Tensor
    aux_logits: list[torch.Tensor] = field(default_factory=list)


class ResNet34Encoder(nn.Module):
    """Five-stage ResNet-34 feature extractor (strides 2, 4, 8, 16, 32)."""

    def __init__(self, pretrained: bool = False):
        super().__init__()
        net = resnet34(weights=ResNet34_Weights.IMAGENET1K_V1 if pretrained else None)
        self.stages = nn.ModuleList([
            nn.Sequential(net.conv1, net.bn1, net.relu),
            nn.Sequential(net.maxpool, net.layer1),
            net.layer2,
            net.layer3,
            net.layer4,
        ])


def conv_bn_relu(cin: int, cout: int, k: int = 3) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(cin, cout, k, padding=k // 2, bias=False),
        nn.BatchNorm2d(cout),
        nn.ReLU(inplace=True),
    )


class UNetBlock(nn.Module):
    def __init__(self, cin: int, skip: int, cout: int):
        super().__init__()
        self.conv = nn.Sequential(conv_bn_relu(cin + skip, cout), conv_bn_relu(cout, cout))

    def forward(self, x, skip=None):
        x = F.interpolate(x, scale_factor=2, mode="nearest")
        if skip is not None:
            x = torch.cat([x, skip], dim=1)
        return self.conv(x)


class UNetDecoder(nn.Module):
    def __init__(self, decoder_channels=(256, 128, 64, 32, 16)):
        super().__init__()
        skips = ENCODER_CHANNELS[-2::-1] + (0,)  # 256, 128, 64, 64, none
        cins = (ENCODER_CHANNELS[-1],) + tuple(decoder_channels[:-1])
        self.blocks = nn.ModuleList(UNetBlock(i, s, o) for i, s, o in zip(cins, skips, decoder_channels))
        self.out_channels = decoder_channels[-1]

    def forward(self, feats):
        x = feats[-1]
        skips = list(feats[-2::-1]) + [None]
        for block, skip in zip(self.blocks, skips):
            x = block(x, skip)
        return x


class LinkNetBlock(nn.Module):
    def __init__(self, cin: int, cout: int):
        super().__init__()
        mid = cin // 4
        self.block = nn.Sequential(
            conv_bn_relu(cin, mid, k=1),
            nn.ConvTranspose2d(mid, mid, kernel_size=4, stride=2, padding=1, bias=False),
            nn.BatchNorm2d(mid),
            nn.ReLU(inplace=True),
            conv_bn_relu(mid, cout, k=1),
        )

    def forward(self, x, skip=None):
        x = self.block(x)
        return x if skip is None else x + skip


class LinkNetDecoder(nn.Module):
    def __init__(self, final_channels: int = 32):
        super().__init__()
        c = ENCODER_CHANNELS
        self.blocks = nn.ModuleList([
            LinkNetBlock(c[4], c[3]),
            LinkNetBlock(c[3], c[2]),
            LinkNetBlock(c[2], c[1]),
            LinkNetBlock(c[1], c[0]),
            LinkNetBlock(c[0], final_channels),
        ])
        self.out_channels = final_channels

    def forward(self, feats):
        x = feats[-1]
        skips = list(feats[-2::-1]) + [None]
        for block, skip in zip(self.blocks, skips):
            x = block(x, skip)
        return x


class SegmentationModel(nn.Module):
    """Encoder-decoder binary segmenter.

    UGDA blocks (when enabled) refine the outputs of encoder stages 2-5 before
    those features feed both the next stage and the decoder skips. Auxiliary
    1x1 heads read the refined stage 4 and stage 5 features.
    """

    def __init__(self, variant: VariantConfig, reduction: int = 8, gamma_init: float = 0.1):
        super().__init__()
        self.variant = variant
        self.encoder = ResNet34Encoder(pretrained=variant.pretrained_encoder)
        self.decoder = UNetDecoder() if variant.backbone == "unet" else LinkNetDecoder()
        self.head = nn.Conv2d(self.decoder.out_channels, 1, kernel_size=3, padding=1)
        self.attention = None
        if variant.use_attention:
            self.attention = nn.ModuleDict(
                {str(i): UGDA(ENCODER_CHANNELS[i], reduction, gamma_init) for i in ATTENTION_STAGES}
            )
        self.aux_heads = None
        if variant.use_deep_supervision:
            self.aux_heads = nn.ModuleList(nn.Conv2d(ENCODER_CHANNELS[i], 1, kernel_size=1) for i in AUX_STAGES)
        self._init_weights()

    def _init_weights(self):
        skip_encoder = self.variant.pretrained_encoder
        for name, m in self.named_modules():
            if skip_encoder and name.startswith("encoder."):
                continue
            if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
                nn.init.xavier_uniform_(m.weight)
                if m.bias is not None:
                    nn.init.zeros_(m.bias)

    def encode(self, x: torch.Tensor) -> list[torch.Tensor]:
        feats = []
        for i, stage in enumerate(self.encoder.stages):
            x = stage(x)
            if self.attention is not None and str(i) in self.attention:
                x = self.attention[str(i)](x)
            feats.append(x)
        return feats

    def forward(self, x: torch.Tensor) -> ModelOutputs:
        h, w = x.shape[-2:]
        if h % MIN_SIDE or w % MIN_SIDE:
            raise ValueError(f"input height and width must be divisible by {MIN_SIDE}, got {h}x{w}")
        feats = self.encode(x)
        main = self.head(self.decoder(feats))
        aux = []
        if self.aux_heads is not None and self.training:
            aux = [
                F.interpolate(head(feats[i]), size=(h, w), mode="bilinear", align_corners=False)
                for head, i in zip(self.aux_heads, AUX_STAGES)
            ]
        return ModelOutputs(main, aux)

    def ugda_modules(self) -> list[UGDA]:
        return [] if self.attention is None else list(self.attention.values())


def build_variant(cfg: VariantConfig, train_cfg=None, seed: int | None = None) -> SegmentationModel:
    """Build a model for ``cfg``; initialization is seeded from ``train_cfg.seed`` (or ``seed``)."""
    if seed is None:
        seed = getattr(train_cfg, "seed", 42)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return SegmentationModel(cfg)


def model_forward(model: nn.Module, batch: torch.Tensor, mode: str = "eval") -> ModelOutputs:
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    model.train(mode == "train")
    out = model(batch)
    if isinstance(out, torch.Tensor):
        out = ModelOutputs(out)
    return out


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
