"""The full 2 backbone x 5 variant ablation at desk scale.

Equivalent to ``ugda-seg ablate --preset desk --out runs_desk``; about 7 minutes
on one CPU core.
"""

from pathlib import Path

from ugda_seg.ablation import PRESETS, RunManifest, run_ablation
from ugda_seg.losses import LossConfig
from ugda_seg.training import TrainConfig

desk = PRESETS["desk"]
train = TrainConfig(
    epochs=desk["epochs"],
    batch_size=desk["batch_size"],
    learning_rate=desk["learning_rate"],
    side=desk["side"],
    loss=LossConfig(warmup_epochs=desk["warmup_epochs"]),
)
manifest = RunManifest(synthetic=desk["synthetic"], side=desk["side"], train=train, out_dir=Path("runs_desk"))
result = run_ablation(manifest)

print(result.table_text)
print("shared split:", result.split_hash)
for r in result.records:
    print(f"{r.backbone:8s} {r.variant:9s} best epoch {r.best_epoch}  val dice {r.best_val_dice:.4f}")
