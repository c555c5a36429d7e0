"""Dataset loading, degradation-pair construction, and a synthetic toy set.

A sample pairs a center-cropped high-resolution image with its degraded
counterparts: ``lr`` is the bicubic downsample by the configured scale and
``lr_up`` is that image bicubically resized back to the original dimensions.
Episodes start from ``lr_up``; training and metrics compare against ``hr``.

The toy generator produces images where high-frequency structure is both
localized and partially recoverable: a smooth bilinear background with a few
small framed blocks of oriented sinusoidal stripes.  The stripe periods stay
well below the downsample's Nyquist limit so the pattern survives bicubic
degradation attenuated rather than destroyed, and the dark 2 px frames blur
into ramps an enhancer can resharpen.  An enhancer gains by restoring block
interiors and edges, and a location policy gains by finding the blocks,
which is exactly the behavior the training loop must learn at desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

from .errors import DataError
from .image_ops import Image, load_png, resize_bicubic, save_png

# Toy images mimic the aligned-face regime: all high-frequency content sits
# in one textured cluster around a canonical image position (the way eyes or
# a mouth sit at near-fixed positions in aligned crops), jittered a few
# pixels per image, with the blocks inside the cluster at randomized
# canonical offsets. Placement therefore matters (blind placement wastes
# steps on smooth background) while staying learnable from episode returns.
_TOY_JITTER = (3, 2)
# Per-block layout: row offset from the cluster center, candidate col
# offsets (one is drawn per image), height, width, stripe period in HR
# pixels, stripe direction, all on a 48x48 canvas (rescaled for other dims).
# At the default x4 scale the periods map to 2.5-3 px in the downsample,
# inside its Nyquist limit, so downsampling attenuates the stripes without
# erasing them.
_TOY_BLOCKS = (
    (-3, (-2.0, 2.0), 10, 8, 10.0, "x"),
    (3, (-2.0, 2.0), 8, 6, 12.0, "y"),
)
_TOY_AMPLITUDE = 0.3
_TOY_FRAME = 2


@dataclass(frozen=True)
class DatasetSpec:
    """Where a directory-backed dataset lives and how to prepare it."""

    root_dir: str
    split_file: str
    crop: tuple[int, int]
    scale: int
    image_list: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        h, w = self.crop
        if h < 1 or w < 1:
            raise DataError(f"crop {self.crop} must be positive")
        if self.scale < 2:
            raise DataError(f"scale {self.scale} must be >= 2")
        if h % self.scale or w % self.scale:
            raise DataError(
                f"crop {self.crop} not divisible by scale {self.scale}"
            )


@dataclass(frozen=True)
class SamplePair:
    """One training/evaluation sample; lr_up is the episode input."""

    id: str
    hr: Image
    lr: Image
    lr_up: Image


def make_pair(sample_id: str, hr: Image, scale: int) -> SamplePair:
    """Degrade an HR image into the (hr, lr, lr_up) triple."""
    h, w = hr.shape[:2]
    if h % scale or w % scale:
        raise DataError(f"dims {(h, w)} not divisible by scale {scale}")
    lr = resize_bicubic(hr, h // scale, w // scale)
    lr_up = resize_bicubic(lr, h, w)
    return SamplePair(id=sample_id, hr=hr, lr=lr, lr_up=lr_up)


def _center_crop(img: Image, crop: tuple[int, int], what: str) -> Image:
    h, w = img.shape[:2]
    ch, cw = crop
    if ch > h or cw > w:
        raise DataError(f"{what}: crop {crop} larger than image {(h, w)}")
    top = (h - ch) // 2
    left = (w - cw) // 2
    return img[top : top + ch, left : left + cw].copy()


def read_split_file(path) -> list[str]:
    """Image ids, one per line; blank lines and '#' comments skipped."""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise DataError(f"cannot read split file {path}: {e}") from e
    ids = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            ids.append(line)
    return ids


def load_dataset(spec: DatasetSpec) -> list[SamplePair]:
    """Load, center-crop, and degrade every image listed in the split."""
    ids = (
        list(spec.image_list)
        if spec.image_list is not None
        else read_split_file(spec.split_file)
    )
    images_dir = Path(spec.root_dir) / "images"
    pairs = []
    for sample_id in ids:
        name = sample_id if sample_id.endswith(".png") else f"{sample_id}.png"
        path = images_dir / name
        if not path.exists():
            raise DataError(f"listed image missing: {path}")
        img = load_png(path)
        if img.shape[2] == 1:
            img = np.repeat(img, 3, axis=2)
        hr = _center_crop(img, spec.crop, str(path))
        pairs.append(make_pair(sample_id, hr, spec.scale))
    return pairs


def toy_image(
    rng: np.random.Generator, height: int, width: int
) -> tuple[Image, list[tuple[slice, slice]]]:
    """One toy HR image plus the row/col slices of its textured blocks."""
    corners = rng.uniform(0.25, 0.75, size=(2, 2, 3))
    ry = np.linspace(0.0, 1.0, height)[:, None, None]
    rx = np.linspace(0.0, 1.0, width)[None, :, None]
    top = corners[0, 0] * (1 - rx) + corners[0, 1] * rx
    bottom = corners[1, 0] * (1 - rx) + corners[1, 1] * rx
    img = top * (1 - ry) + bottom * ry

    sc = min(height, width) / 48.0
    jy = max(1, round(_TOY_JITTER[0] * sc))
    jx = max(1, round(_TOY_JITTER[1] * sc))
    cy = round(0.5 * height) + int(rng.integers(-jy, jy + 1))
    cx = round(0.5 * width) + int(rng.integers(-jx, jx + 1))

    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    blocks = []
    for dy, dx_choices, bh, bw, period, axis in _TOY_BLOCKS:
        dx = float(rng.choice(dx_choices))
        bh = max(3, round(bh * sc))
        bw = max(3, round(bw * sc))
        r0 = int(np.clip(round(cy + dy * sc - bh / 2), 0, height - bh))
        c0 = int(np.clip(round(cx + dx * sc - bw / 2), 0, width - bw))
        rows = slice(r0, r0 + bh)
        cols = slice(c0, c0 + bw)

        base = rng.uniform(0.35, 0.65, size=3)
        phase = rng.uniform(0.0, 2 * np.pi)
        wave = np.sin(2 * np.pi * (xx if axis == "x" else yy) / period + phase)
        img[rows, cols] = (
            base[None, None, :] + _TOY_AMPLITUDE * wave[rows, cols, None]
        )
        f = max(1, round(_TOY_FRAME * sc))
        dark = base * 0.25
        img[r0 : r0 + f, cols] = dark
        img[r0 + bh - f : r0 + bh, cols] = dark
        img[rows, c0 : c0 + f] = dark
        img[rows, c0 + bw - f : c0 + bw] = dark
        blocks.append((rows, cols))
    return np.clip(img, 0.0, 1.0).astype(np.float32), blocks


def make_toy_dataset(
    n: int, dims: tuple[int, int], scale: int, seed: int
) -> list[SamplePair]:
    """Procedural paired dataset; identical for identical seeds."""
    height, width = dims
    if height % scale or width % scale:
        raise DataError(f"dims {dims} not divisible by scale {scale}")
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(n):
        hr, _ = toy_image(rng, height, width)
        pairs.append(make_pair(f"toy_{i:05d}", hr, scale))
    return pairs


def save_dataset(pairs: Sequence[SamplePair], root_dir, split_name: str) -> Path:
    """Write HR images and a split file in the on-disk dataset layout."""
    root = Path(root_dir)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "splits").mkdir(parents=True, exist_ok=True)
    for pair in pairs:
        save_png(pair.hr, root / "images" / f"{pair.id}.png")
    split = root / "splits" / f"{split_name}.txt"
    split.write_text("".join(f"{p.id}\n" for p in pairs))
    return split


def batch_iterator(
    pairs: Sequence[SamplePair], batch_size: int, shuffle_seed: int
) -> Iterator[list[SamplePair]]:
    """Shuffled minibatches covering the dataset once; the tail is partial."""
    if batch_size < 1:
        raise DataError(f"batch_size {batch_size} must be >= 1")
    order = np.random.default_rng(shuffle_seed).permutation(len(pairs))
    for start in range(0, len(pairs), batch_size):
        yield [pairs[int(i)] for i in order[start : start + batch_size]]
