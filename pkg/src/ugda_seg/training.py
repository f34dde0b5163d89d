"""Training loop: AdamW at constant lr, loss warm-up, best-Dice checkpointing."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch.utils.data import DataLoader, Dataset

from .data import DatasetSplit, PreprocessedExample, SamplePair, example_rng, preprocess
from .evaluation import evaluate
from .losses import LossConfig, active_loss, bce
from .models import SegmentationModel, VariantConfig, build_variant
from .supervision import DSConfig, total_loss

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 40
    batch_size: int = 16
    learning_rate: float = 1e-4
    weight_decay: float = 1e-2
    mixed_precision: bool = False
    seed: int = 42
    side: int = 256
    augment: bool = True
    device: str = "auto"
    loss: LossConfig = field(default_factory=LossConfig)
    ds: DSConfig = field(default_factory=DSConfig)

    def __post_init__(self):
        if isinstance(self.loss, dict):
            self.loss = LossConfig(**self.loss)
        if isinstance(self.ds, dict):
            self.ds = DSConfig(**self.ds)
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")

    def resolved_device(self) -> torch.device:
        if self.device == "auto":
            return torch.device("cuda" if torch.cuda.is_available() else "cpu")
        return torch.device(self.device)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_dice: float
    val_iou: float


@dataclass
class TrainingRecord:
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = -1
    best_val_dice: float = -math.inf
    checkpoint_path: Path | None = None


class SegmentationDataset(Dataset):
    """Lazily preprocessed pairs; train-mode augmentation is seeded per (seed, epoch, id)."""

    def __init__(self, pairs: Sequence[SamplePair], mode: str = "eval", side: int = 256, seed: int = 42):
        self.pairs = list(pairs)
        self.mode = mode
        self.side = side
        self.seed = seed
        self.epoch = 0

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch

    def __len__(self):
        return len(self.pairs)

    def example(self, idx: int) -> PreprocessedExample:
        pair = self.pairs[idx]
        rng = example_rng(self.seed, pair.id, self.epoch) if self.mode == "train" else None
        return preprocess(pair, self.mode, rng=rng, side=self.side)

    def __getitem__(self, idx):
        ex = self.example(idx)
        return torch.from_numpy(ex.image), torch.from_numpy(ex.mask).float()


def load_examples(pairs: Sequence[SamplePair], side: int) -> list[PreprocessedExample]:
    return [preprocess(p, "eval", side=side) for p in pairs]


def compute_loss(model: SegmentationModel, images, masks, epoch: int, cfg: TrainConfig) -> torch.Tensor:
    """Total training objective for one batch (model must be in train mode)."""
    out = model(images)
    variant = getattr(model, "variant", None)
    loss_fn = active_loss(epoch, cfg.loss) if variant is None or variant.use_entropy_loss else bce
    main = loss_fn(out.main_logits, masks)
    aux = [loss_fn(a, masks) for a in out.aux_logits]
    return total_loss(main, aux, cfg.ds)


def train_step(model, batch, epoch: int, cfg: TrainConfig, optimizer=None, scaler=None) -> float:
    """Forward + loss; if ``optimizer`` is given also backpropagate and step.

    Returns the total loss value used for the update.
    """
    images, masks = batch
    model.train()
    device = next(model.parameters()).device
    images, masks = images.to(device), masks.to(device)
    use_amp = cfg.mixed_precision and device.type == "cuda"
    with torch.autocast(device_type=device.type, enabled=use_amp):
        loss = compute_loss(model, images, masks, epoch, cfg)
    if optimizer is not None:
        optimizer.zero_grad(set_to_none=True)
        if scaler is not None and use_amp:
            scaler.scale(loss).backward()
            scaler.step(optimizer)
            scaler.update()
        else:
            loss.backward()
            optimizer.step()
    return float(loss.detach())


def make_optimizer(model: torch.nn.Module, cfg: TrainConfig) -> torch.optim.Optimizer:
    return torch.optim.AdamW(model.parameters(), lr=cfg.learning_rate, weight_decay=cfg.weight_decay)


def checkpoint_name(variant: VariantConfig) -> str:
    return f"{variant.backbone}_{variant.name}_best.ckpt"


def save_checkpoint(path, model: SegmentationModel, epoch: int, best_val_dice: float, train_cfg: TrainConfig | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "state_dict": model.state_dict(),
            "variant": model.variant.to_dict(),
            "epoch": epoch,
            "best_val_dice": best_val_dice,
            "train_config": None if train_cfg is None else train_cfg.to_dict(),
        },
        path,
    )


def load_checkpoint(path, map_location="cpu") -> tuple[SegmentationModel, dict]:
    """Rebuild the model stored at ``path``; returns ``(model, metadata)``."""
    ckpt = torch.load(path, map_location=map_location, weights_only=False)
    variant = VariantConfig(**{**ckpt["variant"], "pretrained_encoder": False})
    model = build_variant(variant, seed=0)
    model.variant = VariantConfig(**ckpt["variant"])
    model.load_state_dict(ckpt["state_dict"])
    model.eval()
    return model, {k: v for k, v in ckpt.items() if k != "state_dict"}


def fit(model: SegmentationModel, split: DatasetSplit, cfg: TrainConfig, run_dir=None) -> TrainingRecord:
    """Train ``model`` on ``split.train`` and keep the best checkpoint by validation Dice.

    Writes ``log.jsonl`` and ``{backbone}_{variant}_best.ckpt`` into ``run_dir``
    (default ``runs/{backbone}_{variant}``).
    """
    if not split.train or not split.val:
        raise ValueError("fit needs non-empty train and val splits")
    device = cfg.resolved_device()
    model.to(device)
    variant = model.variant
    run_dir = Path(run_dir) if run_dir is not None else Path("runs") / f"{variant.backbone}_{variant.name}"
    run_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = run_dir / checkpoint_name(variant)
    log_path = run_dir / "log.jsonl"

    train_ds = SegmentationDataset(split.train, "train" if cfg.augment else "eval", cfg.side, cfg.seed)
    val_examples = load_examples(split.val, cfg.side)
    optimizer = make_optimizer(model, cfg)
    scaler = torch.amp.GradScaler("cuda") if cfg.mixed_precision and device.type == "cuda" else None

    record = TrainingRecord(checkpoint_path=ckpt_path)
    with open(log_path, "w") as log_fh:
        for epoch in range(cfg.epochs):
            train_ds.set_epoch(epoch)
            gen = torch.Generator().manual_seed(cfg.seed + epoch)
            # a trailing batch of one image breaks BatchNorm at the 1x1 bottleneck
            drop_last = len(train_ds) > 1 and len(train_ds) % cfg.batch_size == 1
            loader = DataLoader(
                train_ds, batch_size=cfg.batch_size, shuffle=True, generator=gen, num_workers=0, drop_last=drop_last
            )
            losses = []
            for b, batch in enumerate(loader):
                value = train_step(model, batch, epoch, cfg, optimizer, scaler)
                if not math.isfinite(value):
                    raise FloatingPointError(f"non-finite loss {value} at epoch {epoch}, batch {b}")
                losses.append(value)

            metrics = evaluate(model, val_examples, batch_size=cfg.batch_size, device=device)
            stats = EpochStats(epoch, float(np.mean(losses)), metrics.mean_dsc, metrics.mean_iou)
            record.epochs.append(stats)
            log_fh.write(json.dumps(asdict(stats)) + "\n")
            log_fh.flush()
            log.info("epoch %d loss %.4f val_dice %.4f val_iou %.4f", epoch, stats.train_loss, stats.val_dice, stats.val_iou)

            if stats.val_dice > record.best_val_dice:
                record.best_val_dice = stats.val_dice
                record.best_epoch = epoch
                save_checkpoint(ckpt_path, model, epoch, stats.val_dice, cfg)
    return record
