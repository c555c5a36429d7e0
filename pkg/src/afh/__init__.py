"""Recurrent attention-driven face hallucination.

A policy network sequentially picks patch locations on a bicubic-upsampled
image; a local enhancement network refines each patch conditioned on a
global view.  The enhancer trains on per-step supervised MSE, the policy on
terminal-reward REINFORCE with an EMA baseline, both under ADAM.
"""

from .config import RunConfig, load_config, save_config
from .data import (
    DatasetSpec,
    SamplePair,
    batch_iterator,
    load_dataset,
    make_pair,
    make_toy_dataset,
    read_split_file,
    save_dataset,
)
from .episode import (
    EpisodeConfig,
    StepRecord,
    Trajectory,
    argmax_location,
    coverage_mask,
    export_trajectory,
    replay_states,
    run_episode,
    sample_location,
)
from .errors import (
    AfhError,
    CheckpointError,
    ConfigError,
    DataError,
    GeometryError,
    LocationError,
    ShapeError,
    TrainingDiverged,
)
from .image_ops import (
    PatchGeometry,
    PatchLocation,
    crop_patch,
    footprint_mask,
    load_png,
    patch_bounds,
    replace_patch,
    resize_bicubic,
    save_png,
    to_luminance,
)
from .metrics import MetricReport, evaluate, fsim, psnr, ssim, write_metrics_csv
from .nets import (
    EnhancerConfig,
    ParamSet,
    PolicyConfig,
    RecurrentMemory,
    enhance_forward,
    gradients,
    init_params,
    load_checkpoint,
    policy_forward,
    save_checkpoint,
)
from .training import (
    AdamState,
    BaselineState,
    OptimizerConfig,
    RewardSpec,
    TrainState,
    adam_step,
    enhancement_loss,
    reinforce_gradient,
    terminal_reward,
    train,
    update_baseline,
    validation_psnr,
)

__version__ = "0.1.0"
