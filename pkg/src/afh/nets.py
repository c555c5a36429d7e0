"""Policy and enhancement networks, their parameters, and checkpointing.

Two fixed topologies, scalable through their configs:

* ``PolicyNet`` scores every pixel location of the working image: a
  fully-connected image encoder, one LSTM step fusing the encoding with the
  previous action, and a linear head producing an H*W softmax.
* ``EnhancerNet`` refines one patch conditioned on the whole image: two
  fully-connected layers turn the flattened image into a patch-sized context
  map, which is stacked onto the patch as an extra channel and pushed through
  a cascade of same-size convolutions; the final layer emits a residual that
  is added to the input patch and clamped to [0, 1].

The public ``policy_forward`` / ``enhance_forward`` functions take and return
numpy images and run without autograd.  For differentiable composition (loss
functions handed to :func:`gradients`, and the training-time replays) use the
modules' ``step`` methods directly on torch tensors.

Checkpoints use a self-describing container: magic ``AFH1``, a JSON header
with both config blocks and a tensor manifest (name, dtype, shape, byte
offset), then raw little-endian tensor payloads.  Save -> load -> save is
byte-identical.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import torch
from torch import nn

from .errors import CheckpointError, ShapeError
from .image_ops import Image, PatchLocation


def default_conv_spec(channels: int) -> tuple[tuple[int, int], ...]:
    """The 8-layer cascade: (out_channels, kernel) per layer, residual last."""
    return (
        (16, 3),
        (32, 7),
        (64, 7),
        (64, 7),
        (64, 7),
        (32, 7),
        (16, 3),
        (channels, 5),
    )


@dataclass(frozen=True)
class PolicyConfig:
    image_height: int
    image_width: int
    image_channels: int = 3
    encoder_width: int = 256
    lstm_hidden: int = 512
    # Feed the previous action to the LSTM as normalized (x/W, y/H); with
    # False the LSTM input is the image encoding alone.
    feed_prev_action: bool = True

    @property
    def action_count(self) -> int:
        return self.image_height * self.image_width


@dataclass(frozen=True)
class EnhancerConfig:
    image_height: int
    image_width: int
    image_channels: int = 3
    patch_height: int = 60
    patch_width: int = 45
    global_fc_width: int = 256
    conv_spec: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if not self.conv_spec:
            object.__setattr__(
                self, "conv_spec", default_conv_spec(self.image_channels)
            )
        else:
            object.__setattr__(
                self, "conv_spec", tuple(tuple(layer) for layer in self.conv_spec)
            )
        for i, (out_ch, kernel) in enumerate(self.conv_spec):
            if kernel % 2 != 1 or kernel < 1:
                raise ShapeError(f"conv layer {i}: kernel {kernel} must be odd")
            if out_ch < 1:
                raise ShapeError(f"conv layer {i}: {out_ch} channels invalid")
        if self.conv_spec[-1][0] != self.image_channels:
            raise ShapeError(
                f"last conv layer must emit {self.image_channels} channels "
                f"(the residual), got {self.conv_spec[-1][0]}"
            )


@dataclass
class RecurrentMemory:
    """LSTM carry of the policy network; zero at the start of an episode."""

    hidden: np.ndarray
    cell: np.ndarray

    @classmethod
    def zeros(cls, cfg: PolicyConfig, dtype=np.float32) -> "RecurrentMemory":
        return cls(
            hidden=np.zeros(cfg.lstm_hidden, dtype=dtype),
            cell=np.zeros(cfg.lstm_hidden, dtype=dtype),
        )


class PolicyNet(nn.Module):
    """Recurrent location scorer over all H*W pixel positions."""

    def __init__(self, cfg: PolicyConfig):
        super().__init__()
        self.cfg = cfg
        in_dim = cfg.image_height * cfg.image_width * cfg.image_channels
        lstm_in = cfg.encoder_width + (2 if cfg.feed_prev_action else 0)
        self.encoder = nn.Linear(in_dim, cfg.encoder_width)
        self.lstm = nn.LSTMCell(lstm_in, cfg.lstm_hidden)
        self.head = nn.Linear(cfg.lstm_hidden, cfg.action_count)

    def step(
        self,
        images: torch.Tensor,
        hidden: torch.Tensor,
        cell: torch.Tensor,
        prev_xy: torch.Tensor,
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """One recurrent step on a batch.

        Args:
            images: (B, H, W, C) current working images.
            hidden, cell: (B, lstm_hidden) carried memory.
            prev_xy: (B, 2) previous action as (x/W, y/H); zeros when none.

        Returns:
            probs (B, H*W) softmax over row-major locations, plus the new
            hidden and cell states.
        """
        feat = torch.relu(self.encoder(images.flatten(1)))
        if self.cfg.feed_prev_action:
            feat = torch.cat([feat, prev_xy], dim=1)
        hidden, cell = self.lstm(feat, (hidden, cell))
        return torch.softmax(self.head(hidden), dim=1), hidden, cell


class EnhancerNet(nn.Module):
    """Residual patch refiner conditioned on a global image encoding."""

    def __init__(self, cfg: EnhancerConfig):
        super().__init__()
        self.cfg = cfg
        in_dim = cfg.image_height * cfg.image_width * cfg.image_channels
        patch_area = cfg.patch_height * cfg.patch_width
        self.global_fc1 = nn.Linear(in_dim, cfg.global_fc_width)
        self.global_fc2 = nn.Linear(cfg.global_fc_width, patch_area)
        convs = []
        in_ch = cfg.image_channels + 1  # patch channels + context map
        for out_ch, kernel in cfg.conv_spec:
            convs.append(nn.Conv2d(in_ch, out_ch, kernel, padding=kernel // 2))
            in_ch = out_ch
        self.convs = nn.ModuleList(convs)

    def step(self, patches: torch.Tensor, wholes: torch.Tensor) -> torch.Tensor:
        """Enhance a batch of patches.

        Args:
            patches: (B, ph, pw, C) extracted patches.
            wholes: (B, H, W, C) the working images the patches came from.

        Returns:
            (B, ph, pw, C) enhanced patches, clamp(patch + residual, 0, 1).
        """
        cfg = self.cfg
        ctx = self.global_fc2(torch.relu(self.global_fc1(wholes.flatten(1))))
        ctx = ctx.view(-1, 1, cfg.patch_height, cfg.patch_width)
        x = torch.cat([patches.permute(0, 3, 1, 2), ctx], dim=1)
        last = len(self.convs) - 1
        for i, conv in enumerate(self.convs):
            x = conv(x)
            if i != last:
                x = torch.relu(x)
        out = (patches.permute(0, 3, 1, 2) + x).clamp(0.0, 1.0)
        return out.permute(0, 2, 3, 1)


@dataclass
class ParamSet:
    """All learnable parameters, split into the policy and enhancer groups."""

    policy_cfg: PolicyConfig
    enhancer_cfg: EnhancerConfig
    policy: PolicyNet
    enhancer: EnhancerNet

    @property
    def dtype(self) -> torch.dtype:
        return next(self.policy.parameters()).dtype

    def named_tensors(self) -> dict[str, torch.Tensor]:
        out = {f"policy.{n}": p for n, p in self.policy.named_parameters()}
        out.update(
            {f"enhancer.{n}": p for n, p in self.enhancer.named_parameters()}
        )
        return out

    def policy_tensors(self) -> dict[str, torch.Tensor]:
        return {f"policy.{n}": p for n, p in self.policy.named_parameters()}

    def enhancer_tensors(self) -> dict[str, torch.Tensor]:
        return {f"enhancer.{n}": p for n, p in self.enhancer.named_parameters()}


def _init_module(module: nn.Module, gen: torch.Generator) -> None:
    """Fan-in-scaled uniform weights, zero biases, LSTM forget-gate bias 1.

    Conv weights use the ReLU gain (bound sqrt(6/fan_in)) so the cascade
    keeps its activation scale with depth; FC and LSTM weights use the
    conservative bound 1/sqrt(fan_in), which leaves the initial location
    softmax near uniform.
    """
    for name, p in module.named_parameters():
        with torch.no_grad():
            if "bias" in name.split(".")[-1]:
                p.zero_()
            else:
                if p.dim() == 2 and "weight_hh" in name:
                    fan_in = p.shape[1]
                elif p.dim() >= 2:
                    fan_in = int(np.prod(p.shape[1:]))
                else:
                    fan_in = p.shape[0]
                gain = np.sqrt(6.0) if p.dim() == 4 else 1.0
                bound = float(gain / np.sqrt(fan_in))
                p.uniform_(-bound, bound, generator=gen)
    for name, p in module.named_parameters():
        if name.endswith("lstm.bias_ih"):
            hidden = p.shape[0] // 4
            with torch.no_grad():
                p[hidden : 2 * hidden] = 1.0  # forget gate
    if isinstance(module, EnhancerNet):
        with torch.no_grad():
            module.convs[-1].weight.zero_()
            module.convs[-1].bias.zero_()


def init_params(
    policy_cfg: PolicyConfig,
    enhancer_cfg: EnhancerConfig,
    seed: int,
    dtype: torch.dtype = torch.float32,
) -> ParamSet:
    """Build both networks with a deterministic, seeded initialization.

    The last conv layer starts at zero so the untrained enhancer is the
    identity map (zero residual).
    """
    gen = torch.Generator().manual_seed(seed)
    policy = PolicyNet(policy_cfg).to(dtype)
    enhancer = EnhancerNet(enhancer_cfg).to(dtype)
    _init_module(policy, gen)
    _init_module(enhancer, gen)
    return ParamSet(policy_cfg, enhancer_cfg, policy, enhancer)


def _np_dtype(dtype: torch.dtype):
    return np.float64 if dtype == torch.float64 else np.float32


def _check_image(img: Image, h: int, w: int, c: int, what: str) -> None:
    if img.shape != (h, w, c):
        raise ShapeError(f"{what} shape {img.shape} != expected ({h}, {w}, {c})")


def prev_action_embedding(
    prev_loc: Optional[PatchLocation], cfg: PolicyConfig
) -> np.ndarray:
    """Normalized (x/W, y/H) of the previous action, zeros when there is none."""
    if prev_loc is None:
        return np.zeros(2, dtype=np.float64)
    return np.array(
        [prev_loc.x / cfg.image_width, prev_loc.y / cfg.image_height],
        dtype=np.float64,
    )


def policy_forward(
    params: ParamSet,
    img: Image,
    mem: RecurrentMemory,
    prev_loc: Optional[PatchLocation] = None,
) -> tuple[np.ndarray, RecurrentMemory]:
    """Score all locations of ``img`` given the carried memory.

    Returns an (H, W) probability grid summing to 1 (entry [y, x] is the
    probability of 1-based action (x+1, y+1)) and the updated memory.
    Deterministic given inputs.
    """
    cfg = params.policy_cfg
    _check_image(img, cfg.image_height, cfg.image_width, cfg.image_channels, "image")
    if mem.hidden.shape != (cfg.lstm_hidden,) or mem.cell.shape != (cfg.lstm_hidden,):
        raise ShapeError(
            f"memory shape {mem.hidden.shape} != ({cfg.lstm_hidden},)"
        )
    dt = params.dtype
    with torch.no_grad():
        probs, hidden, cell = params.policy.step(
            torch.from_numpy(np.ascontiguousarray(img)).to(dt).unsqueeze(0),
            torch.from_numpy(mem.hidden).to(dt).unsqueeze(0),
            torch.from_numpy(mem.cell).to(dt).unsqueeze(0),
            torch.from_numpy(prev_action_embedding(prev_loc, cfg))
            .to(dt)
            .unsqueeze(0),
        )
    pm = probs[0].reshape(cfg.image_height, cfg.image_width).numpy()
    out_mem = RecurrentMemory(
        hidden=hidden[0].numpy().astype(_np_dtype(dt), copy=True),
        cell=cell[0].numpy().astype(_np_dtype(dt), copy=True),
    )
    return pm, out_mem


def enhance_forward(params: ParamSet, patch: Image, whole: Image) -> Image:
    """Refine one patch conditioned on the whole working image."""
    cfg = params.enhancer_cfg
    _check_image(patch, cfg.patch_height, cfg.patch_width, cfg.image_channels, "patch")
    _check_image(whole, cfg.image_height, cfg.image_width, cfg.image_channels, "whole image")
    dt = params.dtype
    with torch.no_grad():
        out = params.enhancer.step(
            torch.from_numpy(np.ascontiguousarray(patch)).to(dt).unsqueeze(0),
            torch.from_numpy(np.ascontiguousarray(whole)).to(dt).unsqueeze(0),
        )
    return out[0].numpy().astype(_np_dtype(dt), copy=True)


def gradients(
    params: ParamSet, scalar_loss_fn: Callable[[ParamSet], torch.Tensor]
) -> dict[str, np.ndarray]:
    """Reverse-mode derivatives of a scalar with respect to every parameter.

    ``scalar_loss_fn`` receives the ParamSet and must build a scalar torch
    tensor out of the modules' ``step`` methods (or the parameter tensors
    themselves) plus arithmetic.  Parameters not touched by the loss get zero
    gradients.
    """
    tensors = params.named_tensors()
    for p in tensors.values():
        p.grad = None
    loss = scalar_loss_fn(params)
    if not isinstance(loss, torch.Tensor) or loss.dim() != 0:
        raise ShapeError("loss function must return a scalar tensor")
    loss.backward()
    out = {}
    for name, p in tensors.items():
        g = p.grad
        out[name] = (
            np.zeros(p.shape, dtype=_np_dtype(params.dtype))
            if g is None
            else g.detach().numpy().copy()
        )
        p.grad = None
    return out


# ---------------------------------------------------------------------------
# Checkpoint container
# ---------------------------------------------------------------------------

_MAGIC = b"AFH1"
_DTYPE_NAMES = {torch.float32: "float32", torch.float64: "float64"}
_DTYPE_FROM_NAME = {v: k for k, v in _DTYPE_NAMES.items()}


def _config_to_dict(cfg) -> dict:
    d = dataclasses.asdict(cfg)
    if "conv_spec" in d:
        d["conv_spec"] = [list(layer) for layer in d["conv_spec"]]
    return d


def _flatten_tensors(obj, prefix: str, sink: dict[str, torch.Tensor]):
    """Replace tensor leaves of a nested dict with references into ``sink``."""
    if isinstance(obj, torch.Tensor):
        sink[prefix] = obj
        return {"__tensor__": prefix}
    if isinstance(obj, dict):
        return {
            k: _flatten_tensors(v, f"{prefix}.{k}" if prefix else k, sink)
            for k, v in obj.items()
        }
    return obj


def _restore_tensors(obj, source: dict[str, torch.Tensor]):
    if isinstance(obj, dict):
        if set(obj.keys()) == {"__tensor__"}:
            return source[obj["__tensor__"]]
        return {k: _restore_tensors(v, source) for k, v in obj.items()}
    return obj


def save_checkpoint(params: ParamSet, optimizer_state, path) -> None:
    """Serialize parameters, configs, and optional optimizer state.

    ``optimizer_state`` is a JSON-able nested dict whose tensor leaves are
    stored alongside the parameters (pass None outside of training).
    """
    tensors = dict(params.named_tensors())
    opt_json = None
    if optimizer_state is not None:
        opt_sink: dict[str, torch.Tensor] = {}
        opt_json = _flatten_tensors(optimizer_state, "opt", opt_sink)
        tensors.update(opt_sink)

    names = sorted(tensors)
    manifest = []
    offset = 0
    blobs = []
    for name in names:
        t = tensors[name].detach()
        arr = t.numpy()
        arr = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        blob = np.ascontiguousarray(arr).tobytes()
        manifest.append(
            {
                "name": name,
                "dtype": _DTYPE_NAMES[t.dtype],
                "shape": list(t.shape),
                "offset": offset,
                "nbytes": len(blob),
            }
        )
        blobs.append(blob)
        offset += len(blob)

    header = {
        "version": 1,
        "dtype": _DTYPE_NAMES[params.dtype],
        "policy_config": _config_to_dict(params.policy_cfg),
        "enhancer_config": _config_to_dict(params.enhancer_cfg),
        "tensors": manifest,
        "optimizer_state": opt_json,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<Q", len(header_bytes)))
        f.write(header_bytes)
        for blob in blobs:
            f.write(blob)


def load_checkpoint(
    path,
    expected_policy: Optional[PolicyConfig] = None,
    expected_enhancer: Optional[EnhancerConfig] = None,
):
    """Inverse of :func:`save_checkpoint`; returns (ParamSet, optimizer_state).

    When expected configs are supplied, a mismatch with the stored configs
    raises :class:`CheckpointError` before any tensors are touched.
    """
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    if raw[:4] != _MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:4]!r}")
    (header_len,) = struct.unpack("<Q", raw[4:12])
    try:
        header = json.loads(raw[12 : 12 + header_len])
    except (ValueError, UnicodeDecodeError) as e:
        raise CheckpointError(f"{path}: corrupt header: {e}") from e
    payload = raw[12 + header_len :]

    policy_cfg = PolicyConfig(**header["policy_config"])
    enh_dict = dict(header["enhancer_config"])
    enh_dict["conv_spec"] = tuple(tuple(layer) for layer in enh_dict["conv_spec"])
    enhancer_cfg = EnhancerConfig(**enh_dict)
    if expected_policy is not None and expected_policy != policy_cfg:
        raise CheckpointError(
            f"policy config mismatch: file {policy_cfg}, expected {expected_policy}"
        )
    if expected_enhancer is not None and expected_enhancer != enhancer_cfg:
        raise CheckpointError(
            f"enhancer config mismatch: file {enhancer_cfg}, "
            f"expected {expected_enhancer}"
        )

    loaded: dict[str, torch.Tensor] = {}
    for entry in header["tensors"]:
        np_dt = np.dtype(entry["dtype"]).newbyteorder("<")
        blob = payload[entry["offset"] : entry["offset"] + entry["nbytes"]]
        if len(blob) != entry["nbytes"]:
            raise CheckpointError(f"{path}: truncated tensor {entry['name']}")
        arr = np.frombuffer(blob, dtype=np_dt).reshape(entry["shape"])
        loaded[entry["name"]] = torch.from_numpy(
            arr.astype(np_dt.newbyteorder("="), copy=True)
        )

    params = init_params(policy_cfg, enhancer_cfg, seed=0,
                         dtype=_DTYPE_FROM_NAME[header["dtype"]])
    with torch.no_grad():
        for name, p in params.named_tensors().items():
            if name not in loaded:
                raise CheckpointError(f"{path}: missing tensor {name}")
            if tuple(loaded[name].shape) != tuple(p.shape):
                raise CheckpointError(
                    f"{path}: tensor {name} shape {tuple(loaded[name].shape)} "
                    f"!= {tuple(p.shape)}"
                )
            p.copy_(loaded[name])

    optimizer_state = header.get("optimizer_state")
    if optimizer_state is not None:
        optimizer_state = _restore_tensors(optimizer_state, loaded)
    return params, optimizer_state
