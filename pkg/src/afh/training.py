"""Joint optimization of the policy and enhancer networks.

The enhancer trains on a supervised per-step loss: at every step of a rolled
out episode, the enhanced patch is compared against the matching crop of the
ground-truth image (out-of-image pixels excluded).  The policy trains on the
REINFORCE estimator with a terminal-only reward, the negated mean squared
error of the final image, centered by a scalar exponential-moving-average
baseline.  Both groups update with ADAM.

Gradients never flow through the image compositing chain: when losses are
replayed, every working image I_{t-1} is a constant rebuilt from the recorded
trajectory, while the policy's LSTM memory chain does carry gradients across
steps.  This keeps memory bounded and matches a replay-style estimator.

The public operations (``terminal_reward``, ``enhancement_loss``,
``reinforce_gradient``, ``update_baseline``, ``adam_step``) are the reference
implementations used by tests; :func:`train` runs the same math through
batched private paths for speed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
import torch

from .data import SamplePair
from .episode import (
    EpisodeConfig,
    StepRecord,
    Trajectory,
    argmax_location,
    replay_states,
    sample_location,
)
from .errors import ConfigError, DataError, ShapeError, TrainingDiverged
from .image_ops import (
    Image,
    PatchGeometry,
    PatchLocation,
    crop_patch,
    footprint_mask,
    replace_patch,
)
from .metrics import psnr
from .nets import ParamSet, prev_action_embedding, save_checkpoint

POLICY_MODES = ("learned", "random", "center")
UPDATE_SCHEDULES = ("joint", "alternating")


@dataclass(frozen=True)
class RewardSpec:
    """Terminal-only reward: zero until the last step, then -MSE."""

    discount: float = 1.0
    terminal_only: bool = True

    def step_reward(self, t: int, steps: int, final: Image, gt: Image) -> float:
        if t < steps:
            return 0.0
        return terminal_reward(final, gt)

    def trajectory_return(self, traj: Trajectory, gt: Image) -> float:
        # discount 1.0 with a single terminal reward: the return is -MSE.
        return terminal_reward(traj.final_image, gt)


@dataclass(frozen=True)
class BaselineState:
    """Scalar EMA of observed returns; value 0 until the first update."""

    value: float = 0.0
    decay: float = 0.9
    initialized: bool = False

    def __post_init__(self):
        if not 0.0 < self.decay < 1.0:
            raise ConfigError(f"baseline decay {self.decay} not in (0, 1)")


def update_baseline(
    baseline: BaselineState, batch_mean_return: float
) -> BaselineState:
    """First update adopts the mean; later ones blend with factor ``decay``."""
    if not baseline.initialized:
        return replace(baseline, value=float(batch_mean_return), initialized=True)
    value = baseline.decay * baseline.value + (1.0 - baseline.decay) * float(
        batch_mean_return
    )
    return replace(baseline, value=value)


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 0.0002
    beta1: float = 0.5
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 8
    iterations: int = 1000

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate {self.learning_rate} must be > 0")
        if not 0.0 <= self.beta1 < 1.0 or not 0.0 <= self.beta2 < 1.0:
            raise ConfigError("beta1/beta2 must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be > 0")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size {self.batch_size} must be >= 1")
        if self.iterations < 0:
            raise ConfigError(f"iterations {self.iterations} must be >= 0")


def terminal_reward(final: Image, gt: Image) -> float:
    """Negated mean squared error over all pixels and channels."""
    if final.shape != gt.shape:
        raise ShapeError(f"final shape {final.shape} != ground truth {gt.shape}")
    diff = gt.astype(np.float64) - final.astype(np.float64)
    return float(-np.mean(diff * diff))


def _masked_patch_loss(
    params: ParamSet,
    patch_before: torch.Tensor,
    whole: torch.Tensor,
    gt_patch: torch.Tensor,
    mask: torch.Tensor,
) -> torch.Tensor:
    """Mean squared error of enhanced vs ground-truth patch, in-bounds only.

    All tensors are batched; mask is (B, ph, pw, 1) with in-bounds pixels 1.
    Returns per-item losses of shape (B,).
    """
    out = params.enhancer.step(patch_before, whole)
    se = (out - gt_patch) ** 2 * mask
    counts = mask.sum(dim=(1, 2, 3)) * out.shape[3]
    return se.sum(dim=(1, 2, 3)) / counts


def enhancement_loss(
    traj: Trajectory, gt: Image, geom: PatchGeometry, params: ParamSet
) -> torch.Tensor:
    """Supervised per-step loss, averaged over steps.

    Replays each recorded patch through the enhancer so the result is
    differentiable with respect to the enhancer parameters.  Out-of-image
    patch pixels carry no loss.  T = 0 gives exactly 0.
    """
    if gt.shape != traj.input_image.shape:
        raise ShapeError(
            f"ground truth shape {gt.shape} != input {traj.input_image.shape}"
        )
    if not traj.records:
        return torch.zeros((), dtype=params.dtype)
    dt = params.dtype
    h, w = gt.shape[:2]
    states = list(replay_states(traj))
    total = torch.zeros((), dtype=dt)
    for i, rec in enumerate(traj.records):
        if rec.patch_before is None:
            raise ShapeError("trajectory lacks stored patches; cannot replay loss")
        whole = traj.input_image if traj.global_input == "original" else states[i]
        mask = footprint_mask(rec.loc, geom, h, w)
        loss = _masked_patch_loss(
            params,
            torch.from_numpy(np.ascontiguousarray(rec.patch_before)).to(dt)[None],
            torch.from_numpy(np.ascontiguousarray(whole)).to(dt)[None],
            torch.from_numpy(crop_patch(gt, rec.loc, geom)).to(dt)[None],
            torch.from_numpy(mask.astype(np.float64)).to(dt)[None, :, :, None],
        )
        total = total + loss[0]
    return total / len(traj.records)


def _episode_log_prob_sum(params: ParamSet, traj: Trajectory) -> torch.Tensor:
    """Differentiable sum of log-probabilities of the recorded actions.

    Rebuilds every working image as a constant and replays the policy with
    gradients, carrying the LSTM memory chain across steps.
    """
    cfg = params.policy_cfg
    dt = params.dtype
    hidden = torch.zeros(1, cfg.lstm_hidden, dtype=dt)
    cell = torch.zeros(1, cfg.lstm_hidden, dtype=dt)
    prev_xy = torch.zeros(1, 2, dtype=dt)
    total = torch.zeros((), dtype=dt)
    states = replay_states(traj)
    for rec in traj.records:
        img = next(states)
        probs, hidden, cell = params.policy.step(
            torch.from_numpy(np.ascontiguousarray(img)).to(dt)[None],
            hidden,
            cell,
            prev_xy,
        )
        idx = (rec.loc.y - 1) * cfg.image_width + (rec.loc.x - 1)
        total = total + torch.log(probs[0, idx])
        prev_xy = torch.from_numpy(prev_action_embedding(rec.loc, cfg)).to(dt)[None]
    return total


def reinforce_gradient(
    batch: Sequence[Trajectory],
    returns: Sequence[float],
    baseline: BaselineState,
    params: ParamSet,
) -> dict[str, np.ndarray]:
    """Batch-averaged policy-gradient estimate of the objective -E[R].

    Each trajectory contributes -(R - b) * sum_t grad log pi(l_t | s_{t-1});
    descending along the result raises expected return.  Requires sample-mode
    trajectories (stored log-probs prove it).
    """
    if len(batch) == 0:
        raise DataError("empty trajectory batch")
    if len(batch) != len(returns):
        raise ShapeError(f"{len(batch)} trajectories vs {len(returns)} returns")
    for traj in batch:
        if any(rec.log_prob is None for rec in traj.records):
            raise ShapeError("greedy trajectories carry no log-probs")

    tensors = params.policy_tensors()
    for p in tensors.values():
        p.grad = None
    loss = torch.zeros((), dtype=params.dtype)
    for traj, ret in zip(batch, returns):
        coeff = -(float(ret) - baseline.value) / len(batch)
        loss = loss + coeff * _episode_log_prob_sum(params, traj)
    loss.backward()
    out = {}
    np_dt = np.float64 if params.dtype == torch.float64 else np.float32
    for name, p in tensors.items():
        g = p.grad
        out[name] = (
            np.zeros(p.shape, dtype=np_dt) if g is None else g.detach().numpy().copy()
        )
        p.grad = None
    return out


@dataclass
class AdamState:
    """First/second moment accumulators, updated in place by adam_step."""

    t: int = 0
    m: dict[str, torch.Tensor] = field(default_factory=dict)
    v: dict[str, torch.Tensor] = field(default_factory=dict)


def adam_step(
    params: ParamSet,
    grads: Mapping[str, np.ndarray | torch.Tensor],
    state: AdamState,
    cfg: OptimizerConfig,
) -> tuple[ParamSet, AdamState]:
    """One bias-corrected ADAM update for every named gradient.

    Parameters and moment tensors mutate in place; the inputs are returned
    for call-chaining.  Names absent from ``grads`` are untouched, which is
    how the policy and enhancer groups update independently.
    """
    tensors = params.named_tensors()
    t = state.t + 1
    with torch.no_grad():
        for name in sorted(grads):
            if name not in tensors:
                raise ShapeError(f"gradient for unknown parameter {name!r}")
            p = tensors[name]
            g = torch.as_tensor(grads[name], dtype=p.dtype)
            if tuple(g.shape) != tuple(p.shape):
                raise ShapeError(
                    f"gradient shape {tuple(g.shape)} != parameter "
                    f"{tuple(p.shape)} for {name!r}"
                )
            if name not in state.m:
                state.m[name] = torch.zeros_like(p)
                state.v[name] = torch.zeros_like(p)
            m, v = state.m[name], state.v[name]
            m.mul_(cfg.beta1).add_(g, alpha=1.0 - cfg.beta1)
            v.mul_(cfg.beta2).addcmul_(g, g, value=1.0 - cfg.beta2)
            m_hat = m / (1.0 - cfg.beta1**t)
            v_hat = v / (1.0 - cfg.beta2**t)
            p.sub_(cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon))
    state.t = t
    return params, state


@dataclass
class TrainState:
    """Everything besides parameters needed to resume a run."""

    iteration: int = 0
    baseline: BaselineState = field(default_factory=BaselineState)
    adam_policy: AdamState = field(default_factory=AdamState)
    adam_enhancer: AdamState = field(default_factory=AdamState)

    def to_state_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "baseline": {
                "value": self.baseline.value,
                "decay": self.baseline.decay,
                "initialized": self.baseline.initialized,
            },
            "adam_policy": {
                "t": self.adam_policy.t,
                "m": dict(self.adam_policy.m),
                "v": dict(self.adam_policy.v),
            },
            "adam_enhancer": {
                "t": self.adam_enhancer.t,
                "m": dict(self.adam_enhancer.m),
                "v": dict(self.adam_enhancer.v),
            },
        }

    @classmethod
    def from_state_dict(cls, d: dict) -> "TrainState":
        return cls(
            iteration=int(d["iteration"]),
            baseline=BaselineState(
                value=float(d["baseline"]["value"]),
                decay=float(d["baseline"]["decay"]),
                initialized=bool(d["baseline"]["initialized"]),
            ),
            adam_policy=AdamState(
                t=int(d["adam_policy"]["t"]),
                m=dict(d["adam_policy"]["m"]),
                v=dict(d["adam_policy"]["v"]),
            ),
            adam_enhancer=AdamState(
                t=int(d["adam_enhancer"]["t"]),
                m=dict(d["adam_enhancer"]["m"]),
                v=dict(d["adam_enhancer"]["v"]),
            ),
        )


def _center_location(cfg) -> PatchLocation:
    # With the patch sized to the full image this location aligns the
    # footprint exactly onto the image.
    return PatchLocation(cfg.image_width // 2 + 1, cfg.image_height // 2 + 1)


def _rollout_batch(
    params: ParamSet,
    inputs: Sequence[Image],
    cfg: EpisodeConfig,
    rngs: Optional[Sequence[np.random.Generator]],
    policy_mode: str = "learned",
) -> list[Trajectory]:
    """Roll out a batch of episodes in lockstep with batched net calls.

    Semantics match run_episode per image; batching only changes speed.
    ``policy_mode`` swaps the location source: the policy network, a uniform
    random sampler, or the fixed center location.
    """
    pcfg = params.policy_cfg
    n_actions = pcfg.image_height * pcfg.image_width
    b = len(inputs)
    dt = params.dtype
    imgs = [img.copy() for img in inputs]
    hidden = torch.zeros(b, pcfg.lstm_hidden, dtype=dt)
    cell = torch.zeros(b, pcfg.lstm_hidden, dtype=dt)
    prev_xy = torch.zeros(b, 2, dtype=dt)
    records: list[list[StepRecord]] = [[] for _ in range(b)]

    for t in range(1, cfg.steps + 1):
        locs: list[PatchLocation] = []
        log_probs: list[Optional[float]] = []
        if policy_mode == "learned":
            with torch.no_grad():
                probs, hidden, cell = params.policy.step(
                    torch.from_numpy(np.stack(imgs)).to(dt), hidden, cell, prev_xy
                )
            probs_np = probs.numpy()
            for i in range(b):
                if cfg.mode == "greedy":
                    loc = argmax_location(
                        probs_np[i].reshape(pcfg.image_height, pcfg.image_width)
                    )
                    lp = None
                else:
                    loc, lp = sample_location(
                        probs_np[i].reshape(pcfg.image_height, pcfg.image_width),
                        rngs[i],
                    )
                locs.append(loc)
                log_probs.append(lp)
        elif policy_mode == "random":
            for i in range(b):
                idx = int(rngs[i].integers(0, n_actions))
                y, x = divmod(idx, pcfg.image_width)
                locs.append(PatchLocation(x + 1, y + 1))
                log_probs.append(-math.log(n_actions))
        else:  # center
            center = _center_location(pcfg)
            locs = [center] * b
            log_probs = [0.0] * b

        patches = [crop_patch(imgs[i], locs[i], cfg.geom) for i in range(b)]
        if cfg.global_input == "original":
            wholes = np.stack(inputs)
        else:
            wholes = np.stack(imgs)
        with torch.no_grad():
            enhanced = params.enhancer.step(
                torch.from_numpy(np.stack(patches)).to(dt),
                torch.from_numpy(wholes).to(dt),
            )
        np_dt = np.float64 if dt == torch.float64 else np.float32
        enhanced_np = enhanced.numpy().astype(np_dt)
        for i in range(b):
            imgs[i] = replace_patch(imgs[i], locs[i], enhanced_np[i], cfg.geom)
            records[i].append(
                StepRecord(
                    step=t,
                    loc=locs[i],
                    log_prob=log_probs[i],
                    patch_before=patches[i],
                    patch_after=enhanced_np[i],
                )
            )
        if policy_mode == "learned" and pcfg.feed_prev_action:
            prev_xy = torch.tensor(
                [
                    [loc.x / pcfg.image_width, loc.y / pcfg.image_height]
                    for loc in locs
                ],
                dtype=dt,
            )

    return [
        Trajectory(
            input_image=inputs[i].copy(),
            records=records[i],
            final_image=imgs[i],
            geom=cfg.geom,
            global_input=cfg.global_input,
        )
        for i in range(b)
    ]


def _batched_losses(
    params: ParamSet,
    trajs: Sequence[Trajectory],
    gts: Sequence[Image],
    returns: Sequence[float],
    baseline_value: float,
    geom: PatchGeometry,
    need_policy: bool,
    need_enhancer: bool,
) -> tuple[dict[str, torch.Tensor], dict[str, torch.Tensor], float]:
    """One replay pass computing both losses and their gradients.

    Returns (policy grads, enhancer grads, enhancement loss value).  The two
    losses share no parameters, so a single backward separates cleanly.
    """
    dt = params.dtype
    b = len(trajs)
    steps = trajs[0].steps
    pcfg = params.policy_cfg
    h, w = pcfg.image_height, pcfg.image_width
    all_states = [list(replay_states(tr)) for tr in trajs]

    losses = []
    enh_loss_value = 0.0
    if need_enhancer and steps > 0:
        patches, wholes, gt_patches, masks = [], [], [], []
        for i, tr in enumerate(trajs):
            for t, rec in enumerate(tr.records):
                patches.append(rec.patch_before)
                wholes.append(
                    tr.input_image
                    if tr.global_input == "original"
                    else all_states[i][t]
                )
                gt_patches.append(crop_patch(gts[i], rec.loc, geom))
                masks.append(footprint_mask(rec.loc, geom, h, w))
        per_item = _masked_patch_loss(
            params,
            torch.from_numpy(np.stack(patches)).to(dt),
            torch.from_numpy(np.stack(wholes)).to(dt),
            torch.from_numpy(np.stack(gt_patches)).to(dt),
            torch.from_numpy(np.stack(masks).astype(np.float64)).to(dt)[..., None],
        )
        enh_loss = per_item.mean()  # equal T everywhere: flat mean == nested
        enh_loss_value = float(enh_loss.detach())
        losses.append(enh_loss)

    if need_policy and steps > 0:
        hidden = torch.zeros(b, pcfg.lstm_hidden, dtype=dt)
        cell = torch.zeros(b, pcfg.lstm_hidden, dtype=dt)
        prev_xy = torch.zeros(b, 2, dtype=dt)
        logp_sum = torch.zeros(b, dtype=dt)
        for t in range(steps):
            imgs = torch.from_numpy(
                np.stack([all_states[i][t] for i in range(b)])
            ).to(dt)
            probs, hidden, cell = params.policy.step(imgs, hidden, cell, prev_xy)
            idxs = torch.tensor(
                [(tr.records[t].loc.y - 1) * w + (tr.records[t].loc.x - 1)
                 for tr in trajs]
            )
            logp_sum = logp_sum + torch.log(probs[torch.arange(b), idxs])
            prev_xy = torch.tensor(
                [[tr.records[t].loc.x / w, tr.records[t].loc.y / h]
                 for tr in trajs],
                dtype=dt,
            )
        coeff = torch.tensor(
            [-(float(r) - baseline_value) / b for r in returns], dtype=dt
        )
        losses.append((coeff * logp_sum).sum())

    policy_grads: dict[str, torch.Tensor] = {}
    enhancer_grads: dict[str, torch.Tensor] = {}
    if losses:
        tensors = params.named_tensors()
        for p in tensors.values():
            p.grad = None
        total = losses[0]
        for extra in losses[1:]:
            total = total + extra
        total.backward()
        for name, p in tensors.items():
            g = p.grad if p.grad is not None else torch.zeros_like(p)
            if name.startswith("policy."):
                if need_policy:
                    policy_grads[name] = g.detach()
            elif need_enhancer:
                enhancer_grads[name] = g.detach()
            p.grad = None
    return policy_grads, enhancer_grads, enh_loss_value


def validation_psnr(
    params: ParamSet,
    pairs: Sequence[SamplePair],
    cfg: EpisodeConfig,
    policy_mode: str = "learned",
    seed: int = 0,
    batch_size: int = 25,
) -> float:
    """Mean PSNR of rolled-out episodes against ground truth.

    Learned policies evaluate greedily; random/center modes use their own
    location sources (seeded, so the number is reproducible).
    """
    if not pairs:
        raise DataError("empty validation set")
    eval_cfg = replace(cfg, mode="greedy" if policy_mode == "learned" else "sample")
    values = []
    for start in range(0, len(pairs), batch_size):
        chunk = pairs[start : start + batch_size]
        rngs = [
            np.random.default_rng([seed, start + k]) for k in range(len(chunk))
        ]
        trajs = _rollout_batch(
            params, [p.lr_up for p in chunk], eval_cfg, rngs, policy_mode
        )
        values.extend(psnr(tr.final_image, p.hr) for tr, p in zip(trajs, chunk))
    return float(np.mean(values))


def train(
    pairs: Sequence[SamplePair],
    params: ParamSet,
    episode_cfg: EpisodeConfig,
    opt_cfg: OptimizerConfig,
    *,
    seed: int = 0,
    policy_mode: str = "learned",
    update_schedule: str = "joint",
    val_pairs: Optional[Sequence[SamplePair]] = None,
    eval_every: int = 0,
    callbacks: Sequence[Callable[[int, dict], None]] = (),
    state: Optional[TrainState] = None,
    log_path=None,
    checkpoint_path=None,
    checkpoint_every: int = 0,
) -> tuple[ParamSet, TrainState]:
    """Run the training loop up to ``opt_cfg.iterations``.

    Per iteration: draw a minibatch, roll out sample-mode episodes, replay
    the supervised enhancer loss and the REINFORCE policy loss, take one
    ADAM step per parameter group, and update the return baseline.  Batch
    draws and episode randomness derive from (seed, iteration), so a resumed
    run continues the same sequence.

    ``policy_mode``: "learned" trains the policy; "random" samples locations
    uniformly (the policy receives no updates); "center" always picks the
    image center (pair with a full-image patch geometry).
    ``update_schedule``: "joint" updates both groups every iteration;
    "alternating" updates the enhancer on odd iterations, the policy on even.
    """
    if not pairs:
        raise DataError("training dataset is empty")
    if policy_mode not in POLICY_MODES:
        raise ConfigError(f"policy_mode {policy_mode!r} not in {POLICY_MODES}")
    if update_schedule not in UPDATE_SCHEDULES:
        raise ConfigError(
            f"update_schedule {update_schedule!r} not in {UPDATE_SCHEDULES}"
        )
    if episode_cfg.mode != "sample":
        episode_cfg = replace(episode_cfg, mode="sample")
    if state is None:
        state = TrainState()

    log_file = None
    log_writer = None
    if log_path is not None:
        log_path = Path(log_path)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        fresh = not log_path.exists() or log_path.stat().st_size == 0
        log_file = open(log_path, "a", newline="")
        log_writer = csv.writer(log_file)
        if fresh:
            log_writer.writerow(
                ["iteration", "enh_loss", "mean_return", "baseline", "val_psnr"]
            )

    try:
        for i in range(state.iteration + 1, opt_cfg.iterations + 1):
            batch_rng = np.random.default_rng([seed, 7, i])
            idxs = batch_rng.integers(0, len(pairs), size=opt_cfg.batch_size)
            batch = [pairs[int(j)] for j in idxs]
            rngs = [
                np.random.default_rng([seed, 11, i, k])
                for k in range(len(batch))
            ]
            trajs = _rollout_batch(
                params, [p.lr_up for p in batch], episode_cfg, rngs, policy_mode
            )
            returns = [
                terminal_reward(tr.final_image, p.hr)
                for tr, p in zip(trajs, batch)
            ]
            mean_return = float(np.mean(returns))
            if not np.isfinite(mean_return):
                raise TrainingDiverged(
                    f"iteration {i}: non-finite return {mean_return}"
                )

            enh_turn = update_schedule == "joint" or i % 2 == 1
            pol_turn = policy_mode == "learned" and (
                update_schedule == "joint" or i % 2 == 0
            )
            policy_grads, enhancer_grads, enh_loss = _batched_losses(
                params,
                trajs,
                [p.hr for p in batch],
                returns,
                state.baseline.value,
                episode_cfg.geom,
                need_policy=pol_turn,
                need_enhancer=enh_turn,
            )
            if enh_turn and not np.isfinite(enh_loss):
                raise TrainingDiverged(
                    f"iteration {i}: non-finite enhancement loss {enh_loss}"
                )
            if pol_turn:
                adam_step(params, policy_grads, state.adam_policy, opt_cfg)
            if enh_turn:
                adam_step(params, enhancer_grads, state.adam_enhancer, opt_cfg)
            state.baseline = update_baseline(state.baseline, mean_return)
            state.iteration = i

            val = None
            if (
                val_pairs
                and eval_every > 0
                and (i % eval_every == 0 or i == opt_cfg.iterations)
            ):
                val = validation_psnr(
                    params, val_pairs, episode_cfg, policy_mode, seed=seed
                )
            stats = {
                "iteration": i,
                "enh_loss": enh_loss,
                "mean_return": mean_return,
                "baseline": state.baseline.value,
                "val_psnr": val,
            }
            for cb in callbacks:
                cb(i, stats)
            if log_writer is not None:
                log_writer.writerow(
                    [
                        i,
                        f"{enh_loss:.8g}",
                        f"{mean_return:.8g}",
                        f"{state.baseline.value:.8g}",
                        "" if val is None else f"{val:.6g}",
                    ]
                )
                log_file.flush()
            if (
                checkpoint_path is not None
                and checkpoint_every > 0
                and (i % checkpoint_every == 0 or i == opt_cfg.iterations)
            ):
                save_checkpoint(params, state.to_state_dict(), checkpoint_path)
    finally:
        if log_file is not None:
            log_file.close()
    return params, state
