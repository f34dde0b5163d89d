"""Backbone x variant ablation runs and the results table."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Sequence

from .data import DatasetSplit, discover_dataset, split_dataset, write_synthetic_dataset
from .evaluation import evaluate, render_visualizations, write_metrics_csv
from .models import BACKBONE_LABELS, BACKBONES, VARIANT_LABELS, VARIANTS, VariantConfig, build_variant
from .training import TrainConfig, fit, load_checkpoint, load_examples

log = logging.getLogger(__name__)

VARIANT_ALIASES = {"ugda": "full", "ugda-net": "full", "attention": "attn", "loss-only": "loss", "ds-only": "ds"}
VARIANT_ALIASES.update({label.lower(): key for key, label in VARIANT_LABELS.items()})
VARIANT_ALIASES["ugda-net"] = "full"

PRESETS = {
    "desk": dict(synthetic=64, side=128, epochs=5, warmup_epochs=1, batch_size=8, learning_rate=1e-3),
    "paper": dict(side=256, epochs=40, warmup_epochs=3, batch_size=16, learning_rate=1e-4, mixed_precision=True),
}


def canonical_variant(name: str) -> str:
    key = name.strip().lower()
    key = VARIANT_ALIASES.get(key, key)
    if key not in VARIANTS:
        raise ValueError(f"unknown variant {name!r}")
    return key


def canonical_backbone(name: str) -> str:
    key = name.strip().lower().replace("-", "")
    if key not in BACKBONES:
        raise ValueError(f"unknown backbone {name!r}")
    return key


@dataclass
class RunManifest:
    data_root: Path | None = None
    synthetic: int | None = None
    side: int = 256
    backbones: Sequence[str] = BACKBONES
    variants: Sequence[str] = tuple(VARIANTS)
    train: TrainConfig = field(default_factory=TrainConfig)
    out_dir: Path = Path("runs")
    pretrained_encoder: bool = False
    viz_samples: int = 3
    jobs: int = 1

    def __post_init__(self):
        self.backbones = [canonical_backbone(b) for b in self.backbones]
        self.variants = [canonical_variant(v) for v in self.variants]
        if not self.backbones or not self.variants:
            raise ValueError("manifest needs at least one backbone and one variant")
        if self.data_root is None and not self.synthetic:
            raise ValueError("manifest needs a dataset root or a synthetic dataset size")
        self.out_dir = Path(self.out_dir)


@dataclass
class RunRecord:
    backbone: str
    variant: str
    dsc: float = float("nan")
    iou: float = float("nan")
    best_epoch: int = -1
    best_val_dice: float = float("nan")
    split_hash: str = ""
    status: str = "ok"
    error: str = ""


@dataclass
class AblationResult:
    records: list[RunRecord]
    split_hash: str
    csv_text: str
    table_text: str

    @property
    def failures(self) -> list[RunRecord]:
        return [r for r in self.records if r.status != "ok"]

    @property
    def rows(self) -> list[RunRecord]:
        return [r for r in self.records if r.status == "ok"]


def split_hash(split: DatasetSplit) -> str:
    return hashlib.sha256(json.dumps(split.ids(), sort_keys=True).encode()).hexdigest()[:16]


def resolve_pairs(manifest: RunManifest):
    if manifest.data_root is not None:
        return discover_dataset(manifest.data_root)
    return write_synthetic_dataset(manifest.out_dir / "data", manifest.synthetic, side=manifest.side, seed=manifest.train.seed)


def run_single(backbone: str, variant: str, split: DatasetSplit, cfg: TrainConfig, out_dir, pretrained: bool = False, viz_samples: int = 3, split_id: str = "") -> RunRecord:
    """Build, train, reload the best checkpoint, test and render one variant."""
    run_dir = Path(out_dir) / f"{backbone}_{variant}"
    vcfg = VariantConfig.from_name(backbone, variant, pretrained_encoder=pretrained)
    model = build_variant(vcfg, cfg)
    history = fit(model, split, cfg, run_dir=run_dir)
    best, _ = load_checkpoint(history.checkpoint_path)
    device = cfg.resolved_device()
    best.to(device)
    test = load_examples(split.test, cfg.side)
    metrics = evaluate(best, test, batch_size=cfg.batch_size, device=device)
    write_metrics_csv(metrics, run_dir / "metrics.csv")
    render_visualizations(best, test[:viz_samples], run_dir / "viz", device=device)
    return RunRecord(backbone, variant, metrics.mean_dsc, metrics.mean_iou, history.best_epoch, history.best_val_dice, split_id)


def _guarded_run(args) -> RunRecord:
    backbone, variant, split_id = args[0], args[1], args[-1]
    try:
        return run_single(*args)
    except Exception as exc:
        log.error("run %s/%s failed:\n%s", backbone, variant, traceback.format_exc())
        return RunRecord(backbone, variant, split_hash=split_id, status="failed", error=f"{type(exc).__name__}: {exc}")


def run_ablation(manifest: RunManifest) -> AblationResult:
    """Train and test every (backbone, variant) pair on one shared split.

    Writes ``results.csv``, ``results.md`` and ``runs.jsonl`` to ``manifest.out_dir``.
    """
    out = manifest.out_dir
    out.mkdir(parents=True, exist_ok=True)
    pairs = resolve_pairs(manifest)
    split = split_dataset(pairs, seed=manifest.train.seed)
    sid = split_hash(split)
    jobs = [
        (b, v, split, manifest.train, out, manifest.pretrained_encoder, manifest.viz_samples, sid)
        for b in manifest.backbones
        for v in manifest.variants
    ]
    if manifest.jobs > 1:
        with ProcessPoolExecutor(max_workers=manifest.jobs) as pool:
            records = list(pool.map(_guarded_run, jobs))
    else:
        records = [_guarded_run(j) for j in jobs]

    ok = [r for r in records if r.status == "ok"]
    csv_text, table_text = emit_table(ok, mark_best=len(manifest.variants) > 1) if ok else ("backbone,variant,dsc,iou\n", "")
    failed = [r for r in records if r.status != "ok"]
    if failed:
        table_text += "\nFailed runs:\n" + "".join(f"- {r.backbone}/{r.variant}: {r.error}\n" for r in failed)
    (out / "results.csv").write_text(csv_text)
    (out / "results.md").write_text(table_text)
    with open(out / "runs.jsonl", "w") as fh:
        for r in records:
            fh.write(json.dumps(asdict(r)) + "\n")
    return AblationResult(records, sid, csv_text, table_text)


def _row(rec) -> tuple[str, str, float, float]:
    if isinstance(rec, RunRecord):
        return rec.backbone, rec.variant, rec.dsc, rec.iou
    b, v, d, i = rec
    return canonical_backbone(b), canonical_variant(v), float(d), float(i)


def emit_table(records, mark_best: bool = True) -> tuple[str, str]:
    """Return ``(csv_text, markdown_table)`` with 4-decimal scores.

    Rows are grouped by backbone (first-seen order) and ordered by variant
    declaration order; the highest-DSC row of each backbone is bolded, ties
    going to the earlier variant.
    """
    rows = [_row(r) for r in records]
    if not rows:
        raise ValueError("emit_table needs at least one record")
    order = list(VARIANTS)
    backbones = list(dict.fromkeys(r[0] for r in rows))
    rows.sort(key=lambda r: (backbones.index(r[0]), order.index(r[1])))

    best = {}
    for b in backbones:
        group = [r for r in rows if r[0] == b]
        best[b] = max(group, key=lambda r: (r[2], -order.index(r[1])))

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["backbone", "variant", "dsc", "iou"])
    for b, v, d, i in rows:
        w.writerow([b, v, f"{d:.4f}", f"{i:.4f}"])

    lines = ["| Backbone | Variant | DSC | IoU |", "|---|---|---|---|"]
    last = None
    for r in rows:
        b, v, d, i = r
        cells = [VARIANT_LABELS[v], f"{d:.4f}", f"{i:.4f}"]
        if mark_best and best[b] is r:
            cells = [f"**{c}**" for c in cells]
        lines.append("| " + " | ".join([BACKBONE_LABELS[b] if b != last else ""] + cells) + " |")
        last = b
    return buf.getvalue(), "\n".join(lines) + "\n"


def parse_table_csv(text: str) -> list[tuple[str, str, float, float]]:
    return [(r["backbone"], r["variant"], float(r["dsc"]), float(r["iou"])) for r in csv.DictReader(io.StringIO(text))]
