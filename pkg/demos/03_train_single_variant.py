"""Train one small UGDA-Net on synthetic seedlings, then inspect metrics and figures.

Takes a couple of minutes on a laptop CPU.
"""

import tempfile
from pathlib import Path

from ugda_seg.data import split_dataset, write_synthetic_dataset
from ugda_seg.evaluation import evaluate, render_visualizations
from ugda_seg.models import VariantConfig, build_variant
from ugda_seg.training import TrainConfig, fit, load_checkpoint, load_examples

work = Path(tempfile.mkdtemp(prefix="ugda_demo_"))

# 24 trays at 96 px, split 70/15/15
pairs = write_synthetic_dataset(work / "data", 24, side=96, seed=0)
split = split_dataset(pairs, seed=42)
print("train/val/test:", len(split.train), len(split.val), len(split.test))

cfg = TrainConfig(epochs=8, batch_size=4, learning_rate=1e-3, side=96)
cfg.loss.warmup_epochs = 2
model = build_variant(VariantConfig.from_name("unet", "full"), cfg)
record = fit(model, split, cfg, run_dir=work / "run")
for e in record.epochs:
    print(f"epoch {e.epoch}  loss {e.train_loss:.4f}  val dice {e.val_dice:.4f}")
print("best epoch", record.best_epoch, "val dice", round(record.best_val_dice, 4))

# The best checkpoint, not the last epoch, is what gets tested
best, meta = load_checkpoint(record.checkpoint_path)
test = load_examples(split.test, cfg.side)
metrics = evaluate(best, test)
print(f"test dsc {metrics.mean_dsc:.4f}  iou {metrics.mean_iou:.4f}")

files = render_visualizations(best, test[:2], work / "viz")
print("overlays and heatmaps:", *files, sep="\n  ")
