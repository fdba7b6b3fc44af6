"""Hyperspectral image super-resolution with dual attention.

Core pieces: a tape-based autodiff tensor engine, attention-augmented
convolution blocks, channel attention, a skip-connected transposed-conv
upsampler, overlapping band grouping, the composite training loss, the
MPSNR/MSSIM/SAM metric triad, an Adam/early-stopping trainer, and a
FastAPI service with a thin CLI client.
"""

from .band_grouping import BandGroupPlan, merge_groups, plan_groups
from .data import HyperCube, degrade_area, extract_patches, normalize, read_cube, synth_cube, write_cube
from .errors import ConfigError, ContractError, DacnError, DimensionError, FormatError
from .loss import LossConfig, l2_penalty, mse, spatial_spectral_grad_loss, total_loss
from .metrics import MetricsReport, evaluate, mpsnr, mssim, sam
from .model import (
    DacnConfig,
    DacnParams,
    forward,
    init_params,
    load_checkpoint,
    save_checkpoint,
    super_resolve,
)
from .tensor import Dims2D, Tensor, no_grad
from .trainer import TrainConfig, TrainState, adam_step, train

__version__ = "0.1.0"

__all__ = [
    "BandGroupPlan",
    "ConfigError",
    "ContractError",
    "DacnConfig",
    "DacnError",
    "DacnParams",
    "Dims2D",
    "DimensionError",
    "FormatError",
    "HyperCube",
    "LossConfig",
    "MetricsReport",
    "Tensor",
    "TrainConfig",
    "TrainState",
    "adam_step",
    "degrade_area",
    "evaluate",
    "extract_patches",
    "forward",
    "init_params",
    "l2_penalty",
    "load_checkpoint",
    "merge_groups",
    "mpsnr",
    "mse",
    "mssim",
    "no_grad",
    "normalize",
    "plan_groups",
    "read_cube",
    "sam",
    "save_checkpoint",
    "spatial_spectral_grad_loss",
    "super_resolve",
    "synth_cube",
    "total_loss",
    "train",
    "write_cube",
]
