"""Render an exported trajectory as a single overview image.

The grid has one column per step.  Top row: the working image the step's
action was chosen on, with the attended patch outlined in red (clipped at
image borders).  Middle row: the extracted patch, whose gray bands are the
out-of-image fill.  Bottom row: the same patch after enhancement.

Layout arithmetic lives in :func:`grid_layout` so consumers can locate any
element of the rendering exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DataError
from .image_ops import (
    Image,
    PatchGeometry,
    PatchLocation,
    load_png,
    patch_bounds,
    save_png,
)

CELL_PAD = 2
BOX_COLOR = (1.0, 0.0, 0.0)
BACKGROUND = 1.0


@dataclass(frozen=True)
class ManifestRow:
    step: int
    loc: PatchLocation
    log_prob: Optional[float]


def read_manifest(manifest_path) -> list[ManifestRow]:
    """Parse manifest.csv (columns step, x, y, log_prob) into ordered rows."""
    path = Path(manifest_path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != [
            "step", "x", "y", "log_prob",
        ]:
            raise DataError(f"{path}: unexpected manifest header {header}")
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 columns, got {rec}")
            try:
                step = int(rec[0])
                loc = PatchLocation(int(rec[1]), int(rec[2]))
                log_prob = float(rec[3]) if rec[3] != "" else None
            except ValueError as e:
                raise DataError(f"{path}:{lineno}: {e}") from e
            rows.append(ManifestRow(step=step, loc=loc, log_prob=log_prob))
    if [r.step for r in rows] != list(range(1, len(rows) + 1)):
        raise DataError(f"{path}: steps are not consecutive from 1")
    return rows


def grid_layout(
    image_height: int, image_width: int, patch_height: int, patch_width: int,
    steps: int,
) -> dict:
    """Pixel positions of every cell in the rendered grid."""
    cell_w = max(image_width, patch_width)
    x_image = (cell_w - image_width) // 2
    x_patch = (cell_w - patch_width) // 2
    y_state = 0
    y_before = image_height + CELL_PAD
    y_after = y_before + patch_height + CELL_PAD
    return {
        "cell_width": cell_w,
        "column_stride": cell_w + CELL_PAD,
        "canvas_width": steps * cell_w + max(steps - 1, 0) * CELL_PAD,
        "canvas_height": y_after + patch_height,
        "x_image": x_image,
        "x_patch": x_patch,
        "y_state": y_state,
        "y_before": y_before,
        "y_after": y_after,
    }


def _to_rgb(img: Image) -> np.ndarray:
    arr = img.astype(np.float64)
    if arr.shape[2] == 1:
        arr = np.repeat(arr, 3, axis=2)
    return arr


def _draw_box(img: np.ndarray, loc: PatchLocation, geom: PatchGeometry) -> None:
    h, w = img.shape[:2]
    top, left, bottom, right = patch_bounds(loc, geom)
    color = np.array(BOX_COLOR)
    c0, c1 = max(left, 0), min(right, w)
    r0, r1 = max(top, 0), min(bottom, h)
    for row in (top, bottom - 1):
        if 0 <= row < h and c0 < c1:
            img[row, c0:c1] = color
    for col in (left, right - 1):
        if 0 <= col < w and r0 < r1:
            img[r0:r1, col] = color


def render_trajectory(trajectory_dir, output_png) -> Path:
    """Compose the trajectory directory into one PNG; returns its path."""
    traj_dir = Path(trajectory_dir)
    rows = read_manifest(traj_dir / "manifest.csv")
    if not rows:
        raise DataError(f"{traj_dir}: empty trajectory")

    states = []
    for t in range(len(rows) + 1):
        path = traj_dir / f"state_{t:02d}.png"
        if not path.exists():
            raise DataError(f"missing state image: {path}")
        states.append(_to_rgb(load_png(path)))
    before, after = [], []
    for row in rows:
        for name, sink in (("patch_before", before), ("patch_after", after)):
            path = traj_dir / f"{name}_{row.step:02d}.png"
            if not path.exists():
                raise DataError(f"missing patch image: {path}")
            sink.append(_to_rgb(load_png(path)))

    h, w = states[0].shape[:2]
    ph, pw = before[0].shape[:2]
    geom = PatchGeometry(patch_height=ph, patch_width=pw)
    layout = grid_layout(h, w, ph, pw, len(rows))
    canvas = np.full(
        (layout["canvas_height"], layout["canvas_width"], 3),
        BACKGROUND,
        dtype=np.float64,
    )
    for i, row in enumerate(rows):
        x0 = i * layout["column_stride"]
        state = states[i].copy()  # the image the action was chosen on
        _draw_box(state, row.loc, geom)
        xi = x0 + layout["x_image"]
        canvas[layout["y_state"] : layout["y_state"] + h, xi : xi + w] = state
        xp = x0 + layout["x_patch"]
        canvas[layout["y_before"] : layout["y_before"] + ph, xp : xp + pw] = (
            before[i]
        )
        canvas[layout["y_after"] : layout["y_after"] + ph, xp : xp + pw] = after[i]

    out = Path(output_png)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_png(canvas.astype(np.float32), out)
    return out
