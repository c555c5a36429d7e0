"""Command-line entry points: train, eval, hallucinate, ablate, visualize.

Every command is deterministic given (config, seed, checkpoint), writes its
artifacts under the output directory, and finishes by writing
``manifest.txt`` listing the produced paths.  Exit status 0 means every
listed artifact exists; any domain error prints a diagnostic and exits 1.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import sys
import time
from pathlib import Path

import numpy as np

from .config import (
    DirectoryDatasetConfig,
    RunConfig,
    ToyDatasetConfig,
    load_config,
    save_config,
)
from .data import DatasetSpec, load_dataset, make_toy_dataset
from .episode import EpisodeConfig, export_trajectory, run_episode
from .errors import AfhError, CheckpointError, ConfigError
from .image_ops import PatchGeometry, load_png, resize_bicubic, save_png
from .metrics import evaluate, write_metrics_csv
from .nets import EnhancerConfig, init_params, load_checkpoint, save_checkpoint
from .training import TrainState, train
from .visualize import render_trajectory

ABLATION_SUITES = ("tsweep", "random_patch", "no_attention", "i0_input")


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "output", None) is not None:
        updates["output_dir"] = args.output
    if getattr(args, "checkpoint", None) is not None:
        updates["checkpoint"] = args.checkpoint
    return dataclasses.replace(cfg, **updates) if updates else cfg


def _load_pairs(cfg: RunConfig):
    """Materialize (train, validation) sample pairs per the dataset config."""
    ds = cfg.dataset
    dims = (cfg.policy.image_height, cfg.policy.image_width)
    if isinstance(ds, ToyDatasetConfig):
        train_pairs = make_toy_dataset(ds.train, dims, ds.scale, seed=ds.seed)
        val_pairs = make_toy_dataset(ds.val, dims, ds.scale, seed=ds.seed + 1)
        return train_pairs, val_pairs
    root = Path(ds.root)
    train_pairs = load_dataset(
        DatasetSpec(str(root), str(root / ds.train_split), dims, ds.scale)
    )
    val_pairs = load_dataset(
        DatasetSpec(str(root), str(root / ds.test_split), dims, ds.scale)
    )
    train_ids = {p.id for p in train_pairs}
    overlap = train_ids.intersection(p.id for p in val_pairs)
    if overlap:
        raise ConfigError(f"train/test splits share ids: {sorted(overlap)[:5]}")
    return train_pairs, val_pairs


def _write_manifest(out_dir: Path, paths: list[Path]) -> int:
    manifest = out_dir / "manifest.txt"
    manifest.write_text("".join(f"{p}\n" for p in paths))
    missing = [p for p in paths if not Path(p).exists()]
    if missing:
        print(f"error: missing artifacts {missing}", file=sys.stderr)
        return 1
    return 0


def _train_run(cfg: RunConfig, out_dir: Path, quiet: bool = False):
    """Shared by cmd_train and cmd_ablate: one full training run."""
    train_pairs, val_pairs = _load_pairs(cfg)
    resume = cfg.checkpoint
    if resume:
        params, opt_state = load_checkpoint(
            resume, expected_policy=cfg.policy, expected_enhancer=cfg.enhancer
        )
        state = (
            TrainState.from_state_dict(opt_state)
            if opt_state is not None
            else TrainState()
        )
    else:
        params = init_params(cfg.policy, cfg.enhancer, seed=cfg.seed)
        state = TrainState()

    def progress(i: int, stats: dict) -> None:
        if quiet:
            return
        if i % 50 == 0 or stats["val_psnr"] is not None:
            val = stats["val_psnr"]
            extra = "" if val is None else f" val_psnr={val:.3f}"
            print(
                f"iter {i}: enh_loss={stats['enh_loss']:.6f} "
                f"return={stats['mean_return']:.6f}{extra}",
                flush=True,
            )

    ckpt_path = out_dir / "checkpoint.afh"
    params, state = train(
        train_pairs,
        params,
        cfg.episode,
        cfg.optimizer,
        seed=cfg.seed,
        policy_mode=cfg.policy_mode,
        update_schedule=cfg.update_schedule,
        val_pairs=val_pairs,
        eval_every=cfg.eval_every,
        callbacks=(progress,),
        state=state,
        log_path=out_dir / "train_log.csv",
        checkpoint_path=ckpt_path,
        checkpoint_every=cfg.checkpoint_every,
    )
    save_checkpoint(params, state.to_state_dict(), ckpt_path)
    return params, state, val_pairs, ckpt_path


def cmd_train(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _, _, _, ckpt_path = _train_run(cfg, out_dir)
    save_config(cfg, out_dir / "config.json")
    return _write_manifest(
        out_dir,
        [out_dir / "config.json", out_dir / "train_log.csv", ckpt_path],
    )


def cmd_eval(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt = args.checkpoint or cfg.checkpoint
    if not ckpt:
        raise CheckpointError("eval needs --checkpoint (or checkpoint in config)")
    params, _ = load_checkpoint(
        ckpt, expected_policy=cfg.policy, expected_enhancer=cfg.enhancer
    )
    _, test_pairs = _load_pairs(cfg)
    report = evaluate(params, test_pairs, cfg.episode)
    csv_path = out_dir / "metrics.csv"
    write_metrics_csv(report, csv_path)
    print(
        f"mean over {len(report.image_ids)} images: "
        f"psnr={report.psnr_mean:.4f} ssim={report.ssim_mean:.4f} "
        f"fsim={report.fsim_mean:.4f}"
    )
    return _write_manifest(out_dir, [csv_path])


def cmd_hallucinate(args) -> int:
    params, _ = load_checkpoint(args.checkpoint)
    pcfg, ecfg = params.policy_cfg, params.enhancer_cfg
    img = load_png(args.input)
    if img.shape[2] == 1 and pcfg.image_channels == 3:
        img = np.repeat(img, 3, axis=2)
    up = resize_bicubic(img, pcfg.image_height, pcfg.image_width)
    cfg = EpisodeConfig(
        steps=args.steps,
        geom=PatchGeometry(ecfg.patch_height, ecfg.patch_width),
        mode="greedy",
    )
    started = time.perf_counter()
    traj = run_episode(params, up, cfg, record_patches=args.dump_trajectory)
    elapsed = time.perf_counter() - started

    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_png = out_dir / "hallucinated.png"
    save_png(traj.final_image, out_png)
    artifacts = [out_png]
    if args.dump_trajectory:
        manifest = export_trajectory(traj, out_dir / "trajectory")
        artifacts.append(manifest)
    if args.time:
        print(f"episode time: {elapsed:.3f}s ({args.steps} steps)")
    return _write_manifest(out_dir, artifacts)


def _ablation_variants(cfg: RunConfig, suite: str, steps_list: list[int]):
    if suite == "tsweep":
        return [
            (f"T{t}", dataclasses.replace(
                cfg, episode=dataclasses.replace(cfg.episode, steps=t)))
            for t in steps_list
        ]
    if suite == "random_patch":
        return [
            ("learned", cfg),
            ("random", dataclasses.replace(cfg, policy_mode="random")),
        ]
    if suite == "no_attention":
        # Whole-image enhancement: the patch grows to the full image, the
        # location is pinned to the center, five recurrent passes.
        h, w = cfg.policy.image_height, cfg.policy.image_width
        full = dataclasses.replace(
            cfg,
            policy_mode="center",
            enhancer=EnhancerConfig(
                image_height=h,
                image_width=w,
                image_channels=cfg.enhancer.image_channels,
                patch_height=h,
                patch_width=w,
                global_fc_width=cfg.enhancer.global_fc_width,
                conv_spec=cfg.enhancer.conv_spec,
            ),
            episode=dataclasses.replace(
                cfg.episode,
                steps=5,
                geom=PatchGeometry(h, w, cfg.episode.geom.pad_value),
            ),
        )
        return [("attention", cfg), ("no_attention", full)]
    if suite == "i0_input":
        return [
            ("current", cfg),
            ("i0", dataclasses.replace(
                cfg,
                episode=dataclasses.replace(cfg.episode, global_input="original"),
            )),
        ]
    raise ConfigError(f"unknown ablation suite {suite!r}")


def cmd_ablate(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    steps_list = [int(s) for s in args.steps_list.split(",") if s.strip()]
    rows = []
    for name, variant in _ablation_variants(cfg, args.suite, steps_list):
        run_dir = out_dir / f"{args.suite}_{name}"
        run_dir.mkdir(parents=True, exist_ok=True)
        params, _, val_pairs, _ = _train_run(
            dataclasses.replace(variant, checkpoint=None), run_dir, quiet=True
        )
        report = evaluate(params, val_pairs, variant.episode)
        rows.append((name, report))
        print(
            f"{args.suite}/{name}: psnr={report.psnr_mean:.4f} "
            f"ssim={report.ssim_mean:.4f} fsim={report.fsim_mean:.4f}"
        )
    csv_path = out_dir / f"ablate_{args.suite}.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "psnr", "ssim", "fsim"])
        for name, report in rows:
            writer.writerow(
                [
                    name,
                    f"{report.psnr_mean:.6f}",
                    f"{report.ssim_mean:.6f}",
                    f"{report.fsim_mean:.6f}",
                ]
            )
    return _write_manifest(out_dir, [csv_path])


def cmd_visualize(args) -> int:
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_png = render_trajectory(args.trajectory, out_dir / "trajectory.png")
    return _write_manifest(out_dir, [out_png])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="afh",
        description=(
            "Recurrent attention face hallucination: train and evaluate a "
            "patch-selecting policy plus a local enhancement network."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train from a config file")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--checkpoint", help="resume from this checkpoint")
    p_train.add_argument("--seed", type=int)
    p_train.add_argument("--output", help="override output_dir")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="greedy evaluation on the test split")
    p_eval.add_argument("--config", required=True)
    p_eval.add_argument("--checkpoint")
    p_eval.add_argument("--seed", type=int)
    p_eval.add_argument("--output")
    p_eval.set_defaults(func=cmd_eval)

    p_hall = sub.add_parser("hallucinate", help="enhance a single image")
    p_hall.add_argument("--checkpoint", required=True)
    p_hall.add_argument("--input", required=True, help="input PNG")
    p_hall.add_argument("--output", required=True, help="output directory")
    p_hall.add_argument("--steps", type=int, default=25)
    p_hall.add_argument("--dump-trajectory", action="store_true")
    p_hall.add_argument("--time", action="store_true",
                        help="report per-episode latency")
    p_hall.set_defaults(func=cmd_hallucinate)

    p_abl = sub.add_parser("ablate", help="train and compare variants")
    p_abl.add_argument("--config", required=True)
    p_abl.add_argument("--suite", required=True, choices=ABLATION_SUITES)
    p_abl.add_argument("--seed", type=int)
    p_abl.add_argument("--output")
    p_abl.add_argument(
        "--steps-list",
        default="2,4,6,9",
        help="comma-separated T values for the tsweep suite",
    )
    p_abl.set_defaults(func=cmd_ablate)

    p_vis = sub.add_parser("visualize", help="render an exported trajectory")
    p_vis.add_argument("--trajectory", required=True,
                       help="directory written by --dump-trajectory")
    p_vis.add_argument("--output", required=True, help="output directory")
    p_vis.set_defaults(func=cmd_visualize)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except AfhError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
