"""``ugda-seg`` command line: ablate, train, eval, viz, synth.

Every long flag can also be given in a YAML file passed with ``--config``
(keys use underscores, e.g. ``learning_rate``); explicit flags win over the
file, and the file wins over the preset.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from .ablation import PRESETS, RunManifest, canonical_backbone, canonical_variant, run_ablation, run_single, split_hash
from .data import discover_dataset, split_dataset, write_synthetic_dataset
from .evaluation import evaluate, render_visualizations, write_metrics_csv
from .losses import LossConfig
from .models import BACKBONES, VARIANTS
from .training import TrainConfig, load_checkpoint, load_examples

log = logging.getLogger("ugda_seg")

DEFAULTS = dict(
    data=None, synthetic=None, side=256, backbones=",".join(BACKBONES), variants=",".join(VARIANTS),
    backbone="unet", variant="full", epochs=40, batch_size=16, learning_rate=1e-4, weight_decay=1e-2,
    warmup_epochs=3, seed=42, out="runs", preset=None, jobs=1, pretrained=False, mixed_precision=False,
    viz_samples=3, checkpoint=None, split="test", limit=8, n=64,
)


def _add_data_args(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--data", help="dataset root with images/ and masks/")
    g.add_argument("--synthetic", type=int, metavar="N", help="generate N synthetic pairs instead")
    p.add_argument("--side", type=int, help="resize side (and synthetic image side)")


def _add_train_args(p):
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", dest="batch_size", type=int)
    p.add_argument("--lr", dest="learning_rate", type=float)
    p.add_argument("--weight-decay", dest="weight_decay", type=float)
    p.add_argument("--warmup", dest="warmup_epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--pretrained", action="store_true", default=None, help="ImageNet encoder weights (needs network)")
    p.add_argument("--amp", dest="mixed_precision", action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ugda-seg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ablate", help="train and test every backbone x variant")
    _add_data_args(p)
    _add_train_args(p)
    p.add_argument("--backbones", help="comma list from unet,linknet")
    p.add_argument("--variants", help="comma list from baseline,loss,attn,ds,full")
    p.add_argument("--jobs", type=int, help="parallel worker processes")
    p.add_argument("--viz-samples", dest="viz_samples", type=int)
    p.add_argument("--out")
    p.add_argument("--config")

    p = sub.add_parser("train", help="train a single variant")
    _add_data_args(p)
    _add_train_args(p)
    p.add_argument("--backbone")
    p.add_argument("--variant")
    p.add_argument("--out")
    p.add_argument("--config")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--side", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--split", choices=["train", "val", "test", "all"])
    p.add_argument("--out", help="metrics CSV path")
    p.add_argument("--config")

    p = sub.add_parser("viz", help="render overlays and entropy heatmaps")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--side", type=int)
    p.add_argument("--limit", type=int)
    p.add_argument("--out")
    p.add_argument("--config")

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--side", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    return parser


def resolve_options(args: argparse.Namespace) -> dict:
    """Merge defaults < preset < config file < explicit flags."""
    opts = dict(DEFAULTS)
    file_opts = {}
    if getattr(args, "config", None):
        file_opts = yaml.safe_load(Path(args.config).read_text()) or {}
        file_opts = {k.replace("-", "_"): v for k, v in file_opts.items()}
        for k in ("batch", "lr", "warmup"):
            if k in file_opts:
                file_opts[{"batch": "batch_size", "lr": "learning_rate", "warmup": "warmup_epochs"}[k]] = file_opts.pop(k)
    flags = {k: v for k, v in vars(args).items() if v is not None and k not in ("command", "config", "verbose")}
    preset = flags.get("preset") or file_opts.get("preset")
    if preset:
        opts.update(PRESETS[preset])
    opts.update(file_opts)
    if "data" in flags or "synthetic" in flags:
        opts["data"] = opts["synthetic"] = None
    opts.update(flags)
    opts["_explicit"] = set(file_opts) | set(flags)
    return opts


def train_config(opts: dict) -> TrainConfig:
    return TrainConfig(
        epochs=int(opts["epochs"]),
        batch_size=int(opts["batch_size"]),
        learning_rate=float(opts["learning_rate"]),
        weight_decay=float(opts["weight_decay"]),
        mixed_precision=bool(opts["mixed_precision"]),
        seed=int(opts["seed"]),
        side=int(opts["side"]),
        loss=LossConfig(warmup_epochs=int(opts["warmup_epochs"])),
    )


def _split_list(value) -> list[str]:
    return value if isinstance(value, (list, tuple)) else [s for s in str(value).split(",") if s]


def cmd_ablate(opts) -> int:
    manifest = RunManifest(
        data_root=opts["data"],
        synthetic=opts["synthetic"],
        side=int(opts["side"]),
        backbones=_split_list(opts["backbones"]),
        variants=_split_list(opts["variants"]),
        train=train_config(opts),
        out_dir=opts["out"],
        pretrained_encoder=bool(opts["pretrained"]),
        viz_samples=int(opts["viz_samples"]),
        jobs=int(opts["jobs"]),
    )
    result = run_ablation(manifest)
    print(result.table_text)
    print(f"split hash {result.split_hash}; results in {manifest.out_dir}")
    return 1 if result.failures else 0


def _pairs(opts, out_dir: Path):
    if opts["data"]:
        return discover_dataset(opts["data"])
    if opts["synthetic"]:
        return write_synthetic_dataset(out_dir / "data", int(opts["synthetic"]), side=int(opts["side"]), seed=int(opts["seed"]))
    raise SystemExit("need --data DIR or --synthetic N")


def cmd_train(opts) -> int:
    out = Path(opts["out"])
    split = split_dataset(_pairs(opts, out), seed=int(opts["seed"]))
    backbone, variant = canonical_backbone(opts["backbone"]), canonical_variant(opts["variant"])
    rec = run_single(backbone, variant, split, train_config(opts), out, bool(opts["pretrained"]), 3, split_hash(split))
    print(f"{backbone}/{variant}: test dsc {rec.dsc:.4f} iou {rec.iou:.4f} (best epoch {rec.best_epoch}, val dice {rec.best_val_dice:.4f})")
    return 0


def _checkpoint_examples(opts, which: str):
    model, meta = load_checkpoint(opts["checkpoint"])
    side = opts["side"]
    if "side" not in opts["_explicit"]:
        side = (meta.get("train_config") or {}).get("side", side)
    pairs = discover_dataset(opts["data"])
    if which != "all":
        pairs = getattr(split_dataset(pairs, seed=int(opts["seed"])), which)
    return model, load_examples(pairs, int(side))


def cmd_eval(opts) -> int:
    model, examples = _checkpoint_examples(opts, opts["split"])
    record = evaluate(model, examples)
    out = Path(opts["out"]) if "out" in opts["_explicit"] else Path(opts["checkpoint"]).with_name("eval_metrics.csv")
    write_metrics_csv(record, out)
    print(f"mean dsc {record.mean_dsc:.4f} iou {record.mean_iou:.4f} over {len(record.per_image)} images -> {out}")
    return 0


def cmd_viz(opts) -> int:
    model, examples = _checkpoint_examples(opts, "all")
    out = Path(opts["out"]) if "out" in opts["_explicit"] else Path(opts["checkpoint"]).with_name("viz")
    written = render_visualizations(model, examples[: int(opts["limit"])], out)
    print(f"wrote {len(written)} images to {out}")
    return 0


def cmd_synth(opts) -> int:
    pairs = write_synthetic_dataset(opts["out"], int(opts["n"]), side=int(opts["side"]), seed=int(opts["seed"]))
    print(f"wrote {len(pairs)} pairs to {opts['out']}")
    return 0


COMMANDS = {"ablate": cmd_ablate, "train": cmd_train, "eval": cmd_eval, "viz": cmd_viz, "synth": cmd_synth}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return COMMANDS[args.command](resolve_options(args))


if __name__ == "__main__":
    sys.exit(main())
