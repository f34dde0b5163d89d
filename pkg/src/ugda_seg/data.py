"""Dataset discovery, splitting, preprocessing and synthetic seedling data.

Layout on disk is ``root/images/*.{png,jpg,jpeg}`` and ``root/masks/*.png``,
paired by filename stem.
"""

from __future__ import annotations

import logging
import math
import warnings
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image, ImageDraw
from scipy import ndimage

log = logging.getLogger(__name__)

IMAGENET_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
IMAGENET_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)

MASK_THRESHOLD = 127
FLIP_PROB = 0.5
JITTER_PROB = 0.3
BLUR_PROB = 0.2

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


@dataclass(frozen=True)
class SamplePair:
    image_path: Path
    mask_path: Path
    id: str


@dataclass
class DatasetSplit:
    train: list[SamplePair]
    val: list[SamplePair]
    test: list[SamplePair]
    seed: int

    def ids(self) -> dict[str, list[str]]:
        return {
            "train": [p.id for p in self.train],
            "val": [p.id for p in self.val],
            "test": [p.id for p in self.test],
        }


@dataclass
class PreprocessedExample:
    """A normalized (3, S, S) float32 image and its (1, S, S) uint8 mask."""

    image: np.ndarray
    mask: np.ndarray
    id: str = ""

    @property
    def side(self) -> int:
        return self.image.shape[-1]


def discover_dataset(root, errors: list[str] | None = None) -> list[SamplePair]:
    """Pair ``images/`` and ``masks/`` files under ``root`` by stem.

    Unmatched files are excluded with a warning; if ``errors`` is given, a
    description of each unmatched file is appended to it.
    """
    root = Path(root)
    img_dir, mask_dir = root / "images", root / "masks"
    for d in (img_dir, mask_dir):
        if not d.is_dir():
            raise FileNotFoundError(f"missing dataset directory: {d}")

    images = {p.stem: p for p in img_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES}
    masks = {p.stem: p for p in mask_dir.iterdir() if p.suffix.lower() == ".png"}

    problems = [f"image without mask: {images[s]}" for s in sorted(images.keys() - masks.keys())]
    problems += [f"mask without image: {masks[s]}" for s in sorted(masks.keys() - images.keys())]
    for msg in problems:
        warnings.warn(msg, stacklevel=2)
        log.warning(msg)
    if errors is not None:
        errors.extend(problems)

    return [SamplePair(images[s], masks[s], s) for s in sorted(images.keys() & masks.keys())]


def split_sizes(n: int, ratios: Sequence[float] = (0.70, 0.15, 0.15)) -> tuple[int, int, int]:
    # floor for train; the remainder is shared val/test with the odd one going to val
    r_train, r_val, r_test = ratios
    n_train = math.floor(r_train * n + 1e-9)
    rest = n - n_train
    n_val = math.ceil(rest * r_val / (r_val + r_test) - 1e-9) if rest else 0
    return n_train, n_val, rest - n_val


def split_dataset(
    pairs: Sequence[SamplePair],
    ratios: Sequence[float] = (0.70, 0.15, 0.15),
    seed: int = 42,
) -> DatasetSplit:
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must be three values summing to 1, got {ratios}")
    if len(pairs) < 3:
        raise ValueError(f"need at least 3 pairs to split, got {len(pairs)}")
    order = np.random.default_rng(seed).permutation(len(pairs))
    shuffled = [pairs[i] for i in order]
    n_train, n_val, _ = split_sizes(len(pairs), ratios)
    return DatasetSplit(
        train=shuffled[:n_train],
        val=shuffled[n_train : n_train + n_val],
        test=shuffled[n_train + n_val :],
        seed=seed,
    )


def binarize_mask(raw: np.ndarray, threshold: int = MASK_THRESHOLD) -> np.ndarray:
    """Foreground where ``raw > threshold``; returns uint8 in {0, 1}."""
    return (np.asarray(raw) > threshold).astype(np.uint8)


def example_rng(seed: int, example_id: str, epoch: int = 0) -> np.random.Generator:
    """Independent generator per (seed, epoch, example) so worker count never matters."""
    return np.random.default_rng([seed, epoch, zlib.crc32(example_id.encode())])


def load_image(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"))
    except Exception as exc:
        raise ValueError(f"cannot decode image {path}: {exc}") from exc


def load_mask(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("L"))
    except Exception as exc:
        raise ValueError(f"cannot decode mask {path}: {exc}") from exc


def normalize(image: np.ndarray) -> np.ndarray:
    """(H, W, 3) unit-scaled image -> (3, H, W) ImageNet-normalized float32."""
    out = (image.astype(np.float32) - IMAGENET_MEAN) / IMAGENET_STD
    return np.ascontiguousarray(out.transpose(2, 0, 1))


def denormalize(image: np.ndarray) -> np.ndarray:
    """Inverse of :func:`normalize`, returning (H, W, 3) uint8."""
    hwc = np.asarray(image, dtype=np.float32).transpose(1, 2, 0) * IMAGENET_STD + IMAGENET_MEAN
    return np.clip(np.rint(hwc * 255.0), 0, 255).astype(np.uint8)


def hflip(image: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Flip (H, W, ...) image and (H, W) mask left-right together."""
    return image[:, ::-1].copy(), mask[:, ::-1].copy()


def jitter_brightness_contrast(image: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    contrast = rng.uniform(0.8, 1.2)
    brightness = rng.uniform(-0.2, 0.2)
    return np.clip(image * contrast + brightness, 0.0, 1.0)


def gaussian_blur(image: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    ksize = int(rng.choice([3, 5, 7]))
    sigma = rng.uniform(0.1, 2.0)
    return ndimage.gaussian_filter(
        image, sigma=(sigma, sigma, 0), radius=(ksize // 2, ksize // 2, 0), mode="reflect"
    )


def preprocess_arrays(
    image: np.ndarray,
    raw_mask: np.ndarray,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
    side: int = 256,
) -> tuple[np.ndarray, np.ndarray]:
    """Resize, optionally augment, and normalize an RGB uint8 image and raw mask.

    Returns ``(image (3, S, S) float32, mask (1, S, S) uint8)``.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    img = np.asarray(Image.fromarray(image).resize((side, side), Image.BILINEAR), dtype=np.float32) / 255.0
    mask = binarize_mask(np.asarray(Image.fromarray(raw_mask).resize((side, side), Image.NEAREST)))

    if mode == "train":
        if rng is None:
            raise ValueError("train mode requires an rng")
        if rng.random() < FLIP_PROB:
            img, mask = hflip(img, mask)
        if rng.random() < JITTER_PROB:
            img = jitter_brightness_contrast(img, rng)
        if rng.random() < BLUR_PROB:
            img = gaussian_blur(img, rng)

    return normalize(img), mask[None].astype(np.uint8)


def preprocess(
    example: SamplePair,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
    side: int = 256,
) -> PreprocessedExample:
    image = load_image(example.image_path)
    raw = load_mask(example.mask_path)
    if image.shape[:2] != raw.shape[:2]:
        raise ValueError(
            f"image/mask size mismatch for {example.id}: {image.shape[:2]} vs {raw.shape[:2]}"
        )
    img, mask = preprocess_arrays(image, raw, mode=mode, rng=rng, side=side)
    return PreprocessedExample(img, mask, example.id)


# synthetic seedlings ---------------------------------------------------------

_SOIL = np.array([96, 68, 44], dtype=np.float64)
_CONTAINER = np.array([58, 60, 66], dtype=np.float64)
_STEM = np.array([92, 150, 60], dtype=np.float64)
_LEAF = np.array([70, 170, 55], dtype=np.float64)


def generate_synthetic_pair(seed: int, side: int = 256, n_plants: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Render a seedling tray image and its exact plant mask.

    Returns ``(image (side, side, 3) uint8, mask (side, side) uint8 in {0, 1})``.
    """
    if side < 32:
        raise ValueError(f"side must be >= 32, got {side}")
    if n_plants < 1:
        raise ValueError(f"n_plants must be >= 1, got {n_plants}")
    rng = np.random.default_rng(seed)

    margin = int(side * rng.uniform(0.05, 0.12))
    box = (margin, margin, side - 1 - margin, side - 1 - margin)
    inner = side - 2 * margin

    stem_mask = Image.new("L", (side, side), 0)
    leaf_mask = Image.new("L", (side, side), 0)
    d_stem, d_leaf = ImageDraw.Draw(stem_mask), ImageDraw.Draw(leaf_mask)

    scale = inner / max(1, n_plants) ** 0.5
    for _ in range(n_plants):
        x = rng.uniform(box[0] + 0.2 * inner, box[2] - 0.2 * inner)
        y = rng.uniform(box[1] + 0.55 * inner, box[3] - 0.1 * inner)
        _grow(rng, d_stem, d_leaf, x, y, angle=-np.pi / 2 + rng.normal(0, 0.3),
              length=scale * rng.uniform(0.15, 0.25), depth=2, box=box)

    stems = np.asarray(stem_mask) > 0
    leaves = np.asarray(leaf_mask) > 0
    inside = np.zeros((side, side), dtype=bool)
    inside[box[1] : box[3] + 1, box[0] : box[2] + 1] = True
    stems &= inside
    leaves &= inside
    mask = (stems | leaves).astype(np.uint8)

    noise = rng.normal(0.0, 1.0, size=(side, side, 1))
    img = np.where(inside[..., None], _SOIL + 14.0 * noise, _CONTAINER + 5.0 * noise)
    speckle = inside & (rng.random((side, side)) < 0.06)
    img[speckle] = _SOIL * rng.uniform(0.55, 1.5, size=(speckle.sum(), 1))
    img[leaves] = _LEAF + rng.normal(0.0, 10.0, size=(leaves.sum(), 3))
    img[stems & ~leaves] = _STEM + rng.normal(0.0, 8.0, size=((stems & ~leaves).sum(), 3))
    return np.clip(np.rint(img), 0, 255).astype(np.uint8), mask


def _grow(rng, d_stem, d_leaf, x, y, angle, length, depth, box):
    x2 = float(np.clip(x + length * np.cos(angle), box[0], box[2]))
    y2 = float(np.clip(y + length * np.sin(angle), box[1], box[3]))
    d_stem.line([(x, y), (x2, y2)], fill=255, width=int(rng.integers(1, 5)))
    if depth == 0:
        rx = max(2.0, length * rng.uniform(0.35, 0.6))
        ry = max(1.5, rx * rng.uniform(0.4, 0.7))
        d_leaf.ellipse([x2 - rx, y2 - ry, x2 + rx, y2 + ry], fill=255)
        return
    for _ in range(int(rng.integers(2, 4))):
        _grow(rng, d_stem, d_leaf, x2, y2, angle + rng.uniform(-0.9, 0.9),
              length * rng.uniform(0.55, 0.8), depth - 1, box)


def write_synthetic_dataset(root, n: int, side: int = 256, seed: int = 0, n_plants: int | tuple[int, int] = (1, 4)) -> list[SamplePair]:
    """Write ``n`` synthetic pairs under ``root/images`` and ``root/masks``."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    pairs = []
    for i in range(n):
        sid = f"syn_{i:04d}"
        item_seed = seed * 100_003 + i
        k = n_plants if isinstance(n_plants, int) else int(np.random.default_rng(item_seed).integers(n_plants[0], n_plants[1] + 1))
        image, mask = generate_synthetic_pair(item_seed, side=side, n_plants=k)
        ip, mp = root / "images" / f"{sid}.png", root / "masks" / f"{sid}.png"
        Image.fromarray(image).save(ip)
        Image.fromarray(mask * 255).save(mp)
        pairs.append(SamplePair(ip, mp, sid))
    return pairs
