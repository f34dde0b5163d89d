"""Per-image Dice/IoU, aggregated metrics, overlays and entropy heatmaps."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from PIL import Image

from .data import PreprocessedExample, denormalize
from .losses import pixel_entropy

TP_COLOR = (0, 255, 0)
FP_COLOR = (255, 0, 0)
FN_COLOR = (0, 0, 255)


@dataclass
class MetricsRecord:
    per_image: list[tuple[str, float, float]] = field(default_factory=list)

    @property
    def mean_dsc(self) -> float:
        return float(np.mean([d for _, d, _ in self.per_image]))

    @property
    def mean_iou(self) -> float:
        return float(np.mean([i for _, _, i in self.per_image]))


def _as_bool_pair(pred, gt):
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    return pred.astype(bool), gt.astype(bool)


def dice_score(pred, gt) -> float:
    """2|P&G| / (|P|+|G|); 1.0 when both masks are empty."""
    p, g = _as_bool_pair(pred, gt)
    denom = p.sum() + g.sum()
    if denom == 0:
        return 1.0
    return float(2.0 * np.logical_and(p, g).sum() / denom)


def iou_score(pred, gt) -> float:
    """|P&G| / |P|G|; 1.0 when both masks are empty."""
    p, g = _as_bool_pair(pred, gt)
    union = np.logical_or(p, g).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(p, g).sum() / union)


def _main_logits(out) -> torch.Tensor:
    return out if isinstance(out, torch.Tensor) else out.main_logits


@torch.no_grad()
def predict_probs(model: torch.nn.Module, images: torch.Tensor) -> torch.Tensor:
    was_training = model.training
    model.eval()
    try:
        return torch.sigmoid(_main_logits(model(images)))
    finally:
        model.train(was_training)


def evaluate(
    model: torch.nn.Module,
    examples: Sequence[PreprocessedExample],
    threshold: float = 0.5,
    batch_size: int = 8,
    device: str | torch.device = "cpu",
) -> MetricsRecord:
    if len(examples) == 0:
        raise ValueError("evaluate needs at least one example")
    record = MetricsRecord()
    for start in range(0, len(examples), batch_size):
        chunk = [examples[i] for i in range(start, min(start + batch_size, len(examples)))]
        images = torch.from_numpy(np.stack([e.image for e in chunk])).to(device)
        probs = predict_probs(model, images).cpu().numpy()
        for ex, prob in zip(chunk, probs):
            pred = (prob > threshold).astype(np.uint8)
            record.per_image.append((ex.id, dice_score(pred, ex.mask), iou_score(pred, ex.mask)))
    return record


def write_metrics_csv(record: MetricsRecord, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "dsc", "iou"])
        for sid, d, i in record.per_image:
            w.writerow([sid, f"{d:.6f}", f"{i:.6f}"])
        w.writerow(["mean", f"{record.mean_dsc:.6f}", f"{record.mean_iou:.6f}"])


def _to_rgb_uint8(image) -> np.ndarray:
    image = np.asarray(image)
    if image.ndim == 3 and image.shape[0] == 3 and image.dtype != np.uint8:
        return denormalize(image)
    if image.dtype != np.uint8:
        raise ValueError("overlay image must be uint8 (H, W, 3) or normalized float (3, H, W)")
    return image


def render_overlay(image, pred, gt) -> np.ndarray:
    """Color TP green, FP red, FN blue over the (denormalized) input; TN keeps the input pixel."""
    rgb = _to_rgb_uint8(image).copy()
    p, g = _as_bool_pair(np.squeeze(pred), np.squeeze(gt))
    if rgb.shape[:2] != p.shape:
        raise ValueError(f"image {rgb.shape[:2]} and mask {p.shape} sizes differ")
    rgb[p & g] = TP_COLOR
    rgb[p & ~g] = FP_COLOR
    rgb[~p & g] = FN_COLOR
    return rgb


def render_entropy_heatmap(p) -> np.ndarray:
    """Linear blue (entropy 0) to red (entropy 1) map, (H, W, 3) uint8."""
    p = torch.as_tensor(np.squeeze(np.asarray(p, dtype=np.float64)))
    h = pixel_entropy(p).numpy()
    out = np.zeros(h.shape + (3,), dtype=np.uint8)
    out[..., 0] = np.rint(255.0 * h)
    out[..., 2] = 255 - out[..., 0]
    return out


def save_png(array: np.ndarray, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(array).save(path)


def render_visualizations(model, examples: Sequence[PreprocessedExample], out_dir, threshold: float = 0.5, device="cpu") -> list[Path]:
    """Write ``{id}_overlay.png`` and ``{id}_entropy.png`` for each example."""
    out_dir = Path(out_dir)
    written = []
    for ex in examples:
        prob = predict_probs(model, torch.from_numpy(ex.image[None]).to(device)).cpu().numpy()[0, 0]
        pred = (prob > threshold).astype(np.uint8)
        ov, hm = out_dir / f"{ex.id}_overlay.png", out_dir / f"{ex.id}_entropy.png"
        save_png(render_overlay(ex.image, pred, ex.mask[0]), ov)
        save_png(render_entropy_heatmap(prob), hm)
        written += [ov, hm]
    return written
