"""Core image container conventions and pixel-level operations.

An image is a numpy array of shape (height, width, channels) holding
floating values in [0, 1], channels either 1 or 3.  All functions here are
pure: they never mutate their inputs and are safe to call concurrently.

Patch locations are 1-based (x, y) = (column, row) centers, matching the
action coordinates used by the policy.  A patch of size (ph, pw) centered at
0-based pixel (cy, cx) occupies rows [cy - ph//2, cy - ph//2 + ph) and
columns [cx - pw//2, cx - pw//2 + pw), i.e. the center sits at patch index
(ph//2, pw//2).  Offsets relative to the center therefore span:

    dim  offsets
    2    -1 .. 0
    3    -1 .. +1
    4    -2 .. +1
    5    -2 .. +2

Patches may extend past the image border; out-of-image source pixels are
filled with ``pad_value`` on crop and discarded on write-back.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from PIL import Image as PILImage

from .errors import GeometryError, LocationError

Image = np.ndarray


class PatchLocation(NamedTuple):
    """1-based (column, row) center of an attended patch."""

    x: int
    y: int


@dataclass(frozen=True)
class PatchGeometry:
    """Fixed patch size plus the fill value for out-of-image pixels."""

    patch_height: int = 60
    patch_width: int = 45
    pad_value: float = 0.5

    def validate(self, image_height: int, image_width: int) -> None:
        if self.patch_height < 1 or self.patch_width < 1:
            raise GeometryError(
                f"patch size must be positive, got "
                f"{self.patch_height}x{self.patch_width}"
            )
        if self.patch_height > 2 * image_height or self.patch_width > 2 * image_width:
            raise GeometryError(
                f"patch {self.patch_height}x{self.patch_width} exceeds twice the "
                f"image size {image_height}x{image_width}"
            )
        if not 0.0 <= self.pad_value <= 1.0:
            raise GeometryError(f"pad_value {self.pad_value} outside [0, 1]")


def validate_image(img: Image) -> None:
    """Check the image container invariants (shape, channel count, range)."""
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise GeometryError(f"expected (H, W, C) with C in {{1, 3}}, got {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise GeometryError(f"empty image {img.shape}")
    if not np.isfinite(img).all():
        raise GeometryError("image contains non-finite values")
    if img.min() < 0.0 or img.max() > 1.0:
        raise GeometryError("image values outside [0, 1]")


def check_location(img: Image, loc: PatchLocation) -> None:
    h, w = img.shape[:2]
    if not (1 <= loc.x <= w and 1 <= loc.y <= h):
        raise LocationError(f"location {tuple(loc)} outside 1..{w} x 1..{h}")


def patch_bounds(
    loc: PatchLocation, geom: PatchGeometry
) -> tuple[int, int, int, int]:
    """0-based (top, left, bottom, right) of the patch footprint; bottom/right
    are exclusive.  May extend outside the host image."""
    top = (loc.y - 1) - geom.patch_height // 2
    left = (loc.x - 1) - geom.patch_width // 2
    return top, left, top + geom.patch_height, left + geom.patch_width


def crop_patch(img: Image, loc: PatchLocation, geom: PatchGeometry) -> Image:
    """Extract the fixed-size patch centered at ``loc``.

    In-bounds pixels are copied exactly; pixels whose source coordinate falls
    outside the image are set to ``geom.pad_value``.
    """
    check_location(img, loc)
    geom.validate(img.shape[0], img.shape[1])
    h, w, c = img.shape
    ph, pw = geom.patch_height, geom.patch_width
    top = (loc.y - 1) - ph // 2
    left = (loc.x - 1) - pw // 2

    out = np.full((ph, pw, c), geom.pad_value, dtype=img.dtype)
    y0, y1 = max(top, 0), min(top + ph, h)
    x0, x1 = max(left, 0), min(left + pw, w)
    if y0 < y1 and x0 < x1:
        out[y0 - top : y1 - top, x0 - left : x1 - left] = img[y0:y1, x0:x1]
    return out


def replace_patch(
    img: Image, loc: PatchLocation, patch: Image, geom: PatchGeometry
) -> Image:
    """Write ``patch`` back at ``loc``, clamping written values to [0, 1].

    Pixels outside the patch footprint are returned bit-identical to ``img``;
    out-of-image patch pixels are discarded.
    """
    check_location(img, loc)
    geom.validate(img.shape[0], img.shape[1])
    if patch.shape[:2] != (geom.patch_height, geom.patch_width):
        raise GeometryError(
            f"patch shape {patch.shape[:2]} does not match geometry "
            f"{geom.patch_height}x{geom.patch_width}"
        )
    if patch.shape[2] != img.shape[2]:
        raise GeometryError(
            f"patch has {patch.shape[2]} channels, image has {img.shape[2]}"
        )
    h, w, _ = img.shape
    ph, pw = geom.patch_height, geom.patch_width
    top = (loc.y - 1) - ph // 2
    left = (loc.x - 1) - pw // 2

    out = img.copy()
    y0, y1 = max(top, 0), min(top + ph, h)
    x0, x1 = max(left, 0), min(left + pw, w)
    if y0 < y1 and x0 < x1:
        written = patch[y0 - top : y1 - top, x0 - left : x1 - left]
        out[y0:y1, x0:x1] = np.clip(written, 0.0, 1.0)
    return out


def footprint_mask(
    loc: PatchLocation, geom: PatchGeometry, image_height: int, image_width: int
) -> np.ndarray:
    """Boolean (ph, pw) mask, True where the patch pixel maps inside the image."""
    ph, pw = geom.patch_height, geom.patch_width
    top = (loc.y - 1) - ph // 2
    left = (loc.x - 1) - pw // 2
    rows = np.arange(top, top + ph)
    cols = np.arange(left, left + pw)
    in_rows = (rows >= 0) & (rows < image_height)
    in_cols = (cols >= 0) & (cols < image_width)
    return np.logical_and.outer(in_rows, in_cols)


def _catmull_rom_weights(t: np.ndarray) -> np.ndarray:
    """Weights for the 4 taps at offsets -1..2, Catmull-Rom kernel (a = -0.5)."""
    t2 = t * t
    t3 = t2 * t
    w = np.empty(t.shape + (4,), dtype=np.float64)
    w[..., 0] = 0.5 * (-t3 + 2.0 * t2 - t)
    w[..., 1] = 0.5 * (3.0 * t3 - 5.0 * t2 + 2.0)
    w[..., 2] = 0.5 * (-3.0 * t3 + 4.0 * t2 + t)
    w[..., 3] = 0.5 * (t3 - t2)
    return w


def _resize_axis(data: np.ndarray, out_size: int, axis: int) -> np.ndarray:
    """Bicubic resampling of one axis with edge replication."""
    in_size = data.shape[axis]
    if out_size == in_size:
        return data
    scale = in_size / out_size
    src = (np.arange(out_size, dtype=np.float64) + 0.5) * scale - 0.5
    base = np.floor(src).astype(np.int64)
    t = src - base
    weights = _catmull_rom_weights(t)  # (out, 4)

    moved = np.moveaxis(data, axis, 0)
    acc = np.zeros((out_size,) + moved.shape[1:], dtype=np.float64)
    for k in range(4):
        idx = np.clip(base + k - 1, 0, in_size - 1)
        w = weights[:, k].reshape((out_size,) + (1,) * (moved.ndim - 1))
        acc += w * moved[idx]
    return np.moveaxis(acc, 0, axis)


def resize_bicubic(img: Image, out_height: int, out_width: int) -> Image:
    """Separable bicubic resampling (Catmull-Rom a = -0.5, edge replicate).

    Used both for the x(1/s) degradation and the xs pre-upsampling; output is
    clamped to [0, 1] and keeps the input dtype.
    """
    if out_height < 1 or out_width < 1:
        raise GeometryError(f"output size {out_height}x{out_width} invalid")
    if img.ndim != 3:
        raise GeometryError(f"expected (H, W, C), got shape {img.shape}")
    out = _resize_axis(img.astype(np.float64, copy=False), out_height, axis=0)
    out = _resize_axis(out, out_width, axis=1)
    return np.clip(out, 0.0, 1.0).astype(img.dtype)


# ITU-R BT.601 luma weights, the convention used by every metric here.
_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float64)


def to_luminance(img: Image) -> Image:
    """Collapse to one channel: identity for 1-channel, BT.601 for 3-channel."""
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise GeometryError(f"unsupported channel layout {img.shape}")
    if img.shape[2] == 1:
        return img
    lum = img.astype(np.float64, copy=False) @ _LUMA
    return np.clip(lum, 0.0, 1.0)[..., None].astype(img.dtype)


def load_png(path) -> Image:
    """Read an 8-bit PNG into a float32 image in [0, 1]."""
    with PILImage.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        arr = np.asarray(im, dtype=np.float32) / 255.0
    if arr.ndim == 2:
        arr = arr[..., None]
    return arr


def save_png(img: Image, path) -> None:
    """Write an image as 8-bit PNG via round(v * 255) with clamping."""
    validate_image(img)
    arr = np.clip(np.rint(img.astype(np.float64) * 255.0), 0, 255).astype(np.uint8)
    if arr.shape[2] == 1:
        PILImage.fromarray(arr[..., 0], mode="L").save(path)
    else:
        PILImage.fromarray(arr, mode="RGB").save(path)
