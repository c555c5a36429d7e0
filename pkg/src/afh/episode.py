"""Episode rollout: T steps of select -> crop -> enhance -> replace.

An episode starts from the bicubic-upsampled low-resolution image I_0 (already
at high-resolution dimensions) with zeroed recurrent memory.  At step t the
policy scores every pixel location of the working image I_{t-1}, a location
l_t is chosen (sampled during training, argmax during evaluation), the patch
around l_t is cropped, enhanced conditioned on a global view of the image,
and written back to form I_t.  Pixels never covered by a patch footprint pass
through untouched.

A :class:`Trajectory` records enough to replay the episode exactly: the input
image plus per-step locations, log-probabilities, and pre/post patches.  The
working images I_1..I_T are reconstructed on demand by
:func:`replay_states` instead of being stored.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from .errors import DataError, GeometryError, ShapeError
from .image_ops import (
    Image,
    PatchGeometry,
    PatchLocation,
    crop_patch,
    patch_bounds,
    replace_patch,
    save_png,
    validate_image,
)
from .nets import ParamSet, RecurrentMemory, enhance_forward, policy_forward

EPISODE_MODES = ("sample", "greedy")
GLOBAL_INPUTS = ("current", "original")


@dataclass(frozen=True)
class EpisodeConfig:
    """Rollout shape: how many steps, patch geometry, action selection."""

    steps: int = 25
    geom: PatchGeometry = field(default_factory=PatchGeometry)
    mode: str = "sample"
    # What the enhancer's global encoder sees each step: the current working
    # image, or the initial upsampled input at every step.
    global_input: str = "current"

    def __post_init__(self):
        if self.steps < 0:
            raise ShapeError(f"steps {self.steps} must be >= 0")
        if self.mode not in EPISODE_MODES:
            raise ShapeError(f"mode {self.mode!r} not in {EPISODE_MODES}")
        if self.global_input not in GLOBAL_INPUTS:
            raise ShapeError(
                f"global_input {self.global_input!r} not in {GLOBAL_INPUTS}"
            )


@dataclass
class StepRecord:
    """One select/enhance step; ``step`` counts from 1 as in I_1..I_T."""

    step: int
    loc: PatchLocation
    log_prob: Optional[float]
    patch_before: Optional[Image]
    patch_after: Optional[Image]


@dataclass
class Trajectory:
    """A completed episode, replayable from input_image + patch_after chain."""

    input_image: Image
    records: list[StepRecord]
    final_image: Image
    geom: PatchGeometry
    # Which image fed the enhancer's global encoder during the rollout; a
    # loss replay must use the same source.
    global_input: str = "current"

    @property
    def steps(self) -> int:
        return len(self.records)


def _check_probmap(pm: np.ndarray) -> None:
    if pm.ndim != 2:
        raise ShapeError(f"probability map must be 2-D, got shape {pm.shape}")
    if np.isnan(pm).any():
        raise DataError("probability map contains NaN")
    if (pm < 0).any():
        raise DataError("probability map contains negative entries")


def sample_location(
    pm: np.ndarray, rng: np.random.Generator
) -> tuple[PatchLocation, float]:
    """Draw a location with the probabilities of ``pm``.

    Returns the 1-based location and the natural log of the raw map entry at
    the drawn cell.  Deterministic given the generator state.
    """
    _check_probmap(pm)
    h, w = pm.shape
    p = pm.ravel().astype(np.float64)
    total = p.sum()
    if total <= 0:
        raise DataError("probability map sums to zero")
    idx = int(rng.choice(h * w, p=p / total))
    y, x = divmod(idx, w)
    return PatchLocation(x + 1, y + 1), float(np.log(pm[y, x]))


def argmax_location(pm: np.ndarray) -> PatchLocation:
    """Location of the maximum entry; ties go to the smallest row-major index."""
    _check_probmap(pm)
    idx = int(np.argmax(pm.ravel()))
    y, x = divmod(idx, pm.shape[1])
    return PatchLocation(x + 1, y + 1)


def run_episode(
    params: ParamSet,
    input_img: Image,
    cfg: EpisodeConfig,
    rng: Optional[np.random.Generator] = None,
    record_patches: bool = True,
) -> Trajectory:
    """Roll out one episode from the upsampled input image.

    ``rng`` is required in sample mode and unused in greedy mode.  With
    ``record_patches=False`` only locations and log-probs are kept (enough
    for evaluation, not for loss replay).
    """
    pcfg = params.policy_cfg
    validate_image(input_img)
    if input_img.shape != (pcfg.image_height, pcfg.image_width, pcfg.image_channels):
        raise ShapeError(
            f"input shape {input_img.shape} != policy grid "
            f"({pcfg.image_height}, {pcfg.image_width}, {pcfg.image_channels})"
        )
    cfg.geom.validate(pcfg.image_height, pcfg.image_width)
    if cfg.mode == "sample" and rng is None:
        raise ShapeError("sample mode needs an rng")

    img = input_img.copy()
    mem = RecurrentMemory.zeros(pcfg, dtype=img.dtype)
    prev_loc: Optional[PatchLocation] = None
    records: list[StepRecord] = []
    for t in range(1, cfg.steps + 1):
        pm, mem = policy_forward(params, img, mem, prev_loc)
        if cfg.mode == "sample":
            loc, log_prob = sample_location(pm, rng)
        else:
            loc, log_prob = argmax_location(pm), None
        patch = crop_patch(img, loc, cfg.geom)
        whole = input_img if cfg.global_input == "original" else img
        enhanced = enhance_forward(params, patch, whole)
        img = replace_patch(img, loc, enhanced, cfg.geom)
        records.append(
            StepRecord(
                step=t,
                loc=loc,
                log_prob=log_prob,
                patch_before=patch if record_patches else None,
                patch_after=enhanced if record_patches else None,
            )
        )
        prev_loc = loc
    return Trajectory(
        input_image=input_img.copy(),
        records=records,
        final_image=img,
        geom=cfg.geom,
        global_input=cfg.global_input,
    )


def replay_states(traj: Trajectory) -> Iterator[Image]:
    """Yield the working images I_0, I_1, ..., I_T of a recorded episode."""
    img = traj.input_image
    yield img
    for rec in traj.records:
        if rec.patch_after is None:
            raise GeometryError("trajectory was recorded without patches")
        img = replace_patch(img, rec.loc, rec.patch_after, traj.geom)
        yield img


def coverage_mask(traj: Trajectory, dims: tuple[int, int]) -> np.ndarray:
    """Boolean (H, W) grid marking pixels touched by any step's footprint."""
    h, w = dims
    mask = np.zeros((h, w), dtype=bool)
    for rec in traj.records:
        top, left, bottom, right = patch_bounds(rec.loc, traj.geom)
        mask[max(top, 0) : min(bottom, h), max(left, 0) : min(right, w)] = True
    return mask


def export_trajectory(traj: Trajectory, out_dir) -> Path:
    """Write a trajectory as step images plus a CSV manifest.

    Layout: ``state_00.png`` (the input) through ``state_TT.png``, per-step
    ``patch_before_TT.png`` / ``patch_after_TT.png``, and ``manifest.csv``
    with columns step, x, y, log_prob (log_prob empty for greedy episodes).
    Returns the manifest path.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for t, state in enumerate(replay_states(traj)):
        save_png(state, out / f"state_{t:02d}.png")
    manifest = out / "manifest.csv"
    with open(manifest, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "x", "y", "log_prob"])
        for rec in traj.records:
            save_png(rec.patch_before, out / f"patch_before_{rec.step:02d}.png")
            save_png(rec.patch_after, out / f"patch_after_{rec.step:02d}.png")
            writer.writerow(
                [
                    rec.step,
                    rec.loc.x,
                    rec.loc.y,
                    "" if rec.log_prob is None else f"{rec.log_prob:.10g}",
                ]
            )
    return manifest
