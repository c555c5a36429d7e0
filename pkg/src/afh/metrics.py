"""Image-quality metrics: PSNR, SSIM, FSIM, and dataset-level evaluation.

All three metrics compare [0, 1] images on the BT.601 luminance channel.
PSNR of identical images is the +infinity sentinel (serialized as "inf").
SSIM uses the standard 11x11 Gaussian window, sigma 1.5, K1/K2 = 0.01/0.03.
FSIM combines phase-congruency similarity with Scharr gradient-magnitude
similarity, pooled with max-phase-congruency weights, on a 0-255 scale.
No borders are shaved before comparison.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.signal import convolve2d

from .data import SamplePair
from .episode import EpisodeConfig, run_episode
from .errors import DataError, ShapeError
from .image_ops import Image, to_luminance, validate_image
from .nets import ParamSet
from .phase_congruency import phase_congruency

_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03
_FSIM_T1 = 0.85
_FSIM_T2 = 160.0
# Scharr operator, the gradient convention conventionally paired with
# feature-similarity scoring.
_SCHARR_DX = np.array([[3, 0, -3], [10, 0, -10], [3, 0, -3]], dtype=np.float64) / 16
_SCHARR_DY = np.array([[3, 10, 3], [0, 0, 0], [-3, -10, -3]], dtype=np.float64) / 16


def _luminance_pair(a: Image, b: Image) -> tuple[np.ndarray, np.ndarray]:
    validate_image(a)
    validate_image(b)
    if a.shape != b.shape:
        raise ShapeError(f"image shapes differ: {a.shape} vs {b.shape}")
    # Lift to float64 before the luma projection so no precision is lost to
    # the input dtype.
    ya = to_luminance(a.astype(np.float64))[..., 0]
    yb = to_luminance(b.astype(np.float64))[..., 0]
    return ya, yb


def psnr(a: Image, b: Image) -> float:
    """Peak signal-to-noise ratio in dB for unit dynamic range."""
    ya, yb = _luminance_pair(a, b)
    mse = float(np.mean((ya - yb) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * math.log10(1.0 / mse)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g1 = np.exp(-(coords**2) / (2.0 * sigma**2))
    window = np.outer(g1, g1)
    return window / window.sum()


def ssim(a: Image, b: Image) -> float:
    """Mean structural similarity over all full 11x11 window positions."""
    ya, yb = _luminance_pair(a, b)
    if min(ya.shape) < _SSIM_WINDOW:
        raise ShapeError(
            f"image {ya.shape} smaller than the {_SSIM_WINDOW}x{_SSIM_WINDOW} window"
        )
    win = _gaussian_window(_SSIM_WINDOW, _SSIM_SIGMA)
    mu_a = convolve2d(ya, win, mode="valid")
    mu_b = convolve2d(yb, win, mode="valid")
    var_a = convolve2d(ya * ya, win, mode="valid") - mu_a * mu_a
    var_b = convolve2d(yb * yb, win, mode="valid") - mu_b * mu_b
    cov = convolve2d(ya * yb, win, mode="valid") - mu_a * mu_b
    c1 = _SSIM_K1**2
    c2 = _SSIM_K2**2
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def fsim(a: Image, b: Image) -> float:
    """Feature similarity on 0-255 luminance; result in [0, 1]."""
    ya, yb = _luminance_pair(a, b)
    rows, cols = ya.shape
    if min(rows, cols) < 32:
        raise ShapeError(f"image {ya.shape} too small for feature similarity")
    ya = ya * 255.0
    yb = yb * 255.0

    # Downsample large images with a box filter so structures are compared
    # at a roughly viewing-distance-independent scale.
    f = max(1, _round_half_up(min(rows, cols) / 256.0))
    if f > 1:
        box = np.ones((f, f), dtype=np.float64) / (f * f)
        ya = convolve2d(ya, box, mode="same")[::f, ::f]
        yb = convolve2d(yb, box, mode="same")[::f, ::f]

    pc1 = phase_congruency(ya)
    pc2 = phase_congruency(yb)
    g1 = np.sqrt(
        convolve2d(ya, _SCHARR_DX, mode="same") ** 2
        + convolve2d(ya, _SCHARR_DY, mode="same") ** 2
    )
    g2 = np.sqrt(
        convolve2d(yb, _SCHARR_DX, mode="same") ** 2
        + convolve2d(yb, _SCHARR_DY, mode="same") ** 2
    )
    pc_sim = (2 * pc1 * pc2 + _FSIM_T1) / (pc1**2 + pc2**2 + _FSIM_T1)
    g_sim = (2 * g1 * g2 + _FSIM_T2) / (g1**2 + g2**2 + _FSIM_T2)
    pcm = np.maximum(pc1, pc2)
    return float(np.sum(g_sim * pc_sim * pcm) / np.sum(pcm))


@dataclass(frozen=True)
class MetricReport:
    """Per-image metric values plus their arithmetic means."""

    image_ids: tuple[str, ...]
    psnr_values: tuple[float, ...]
    ssim_values: tuple[float, ...]
    fsim_values: tuple[float, ...]
    psnr_mean: float
    ssim_mean: float
    fsim_mean: float

    @classmethod
    def from_values(
        cls,
        image_ids: Sequence[str],
        psnr_values: Sequence[float],
        ssim_values: Sequence[float],
        fsim_values: Sequence[float],
    ) -> "MetricReport":
        n = len(image_ids)
        if not (len(psnr_values) == len(ssim_values) == len(fsim_values) == n):
            raise ShapeError("per-image metric lists must share one length")
        if n == 0:
            raise DataError("empty metric report")
        return cls(
            image_ids=tuple(image_ids),
            psnr_values=tuple(float(v) for v in psnr_values),
            ssim_values=tuple(float(v) for v in ssim_values),
            fsim_values=tuple(float(v) for v in fsim_values),
            psnr_mean=float(np.mean(psnr_values)),
            ssim_mean=float(np.mean(ssim_values)),
            fsim_mean=float(np.mean(fsim_values)),
        )


def evaluate(
    params: ParamSet, pairs: Sequence[SamplePair], cfg: EpisodeConfig
) -> MetricReport:
    """Greedy episodes over a dataset, all metrics against ground truth."""
    if not pairs:
        raise DataError("empty evaluation dataset")
    cfg = replace(cfg, mode="greedy")
    ids, psnrs, ssims, fsims = [], [], [], []
    for pair in pairs:
        traj = run_episode(params, pair.lr_up, cfg, record_patches=False)
        ids.append(pair.id)
        psnrs.append(psnr(traj.final_image, pair.hr))
        ssims.append(ssim(traj.final_image, pair.hr))
        fsims.append(fsim(traj.final_image, pair.hr))
    return MetricReport.from_values(ids, psnrs, ssims, fsims)


def _format_metric(v: float) -> str:
    return "inf" if math.isinf(v) else f"{v:.6f}"


def write_metrics_csv(report: MetricReport, path) -> None:
    """Per-image rows plus a final mean row; infinite PSNR becomes "inf"."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "psnr", "ssim", "fsim"])
        for i, image_id in enumerate(report.image_ids):
            writer.writerow(
                [
                    image_id,
                    _format_metric(report.psnr_values[i]),
                    _format_metric(report.ssim_values[i]),
                    _format_metric(report.fsim_values[i]),
                ]
            )
        writer.writerow(
            [
                "mean",
                _format_metric(report.psnr_mean),
                _format_metric(report.ssim_mean),
                _format_metric(report.fsim_mean),
            ]
        )
