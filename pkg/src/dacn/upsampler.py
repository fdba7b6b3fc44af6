"""Upsampling head: transposed convolution -> BN -> LeakyReLU -> skip concat,
one stage per doubling of spatial resolution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, DimensionError
from .layers import Conv2DParams, NormState, batch_norm, conv_transpose2d, leaky_relu
from .tensor import Tensor, apply_op, concat

SUPPORTED_SCALES = (2, 4, 8)


@dataclass
class UpsampleStageParams:
    """One 2x stage. ``skip_channels`` may be zero (no skip concatenated)."""

    tconv: Conv2DParams
    bn: NormState
    skip_channels: int = 0

    def __post_init__(self):
        if self.tconv.stride != 2:
            raise ConfigError(f"upsample stage stride must be 2, got {self.tconv.stride}")
        if self.skip_channels < 0:
            raise ContractError("skip_channels must be nonnegative")


def upsample_stage(
    f_in: Tensor,
    f_skip: Tensor | None,
    p: UpsampleStageParams,
    training: bool = False,
    slope: float = 0.2,
) -> Tensor:
    """Double the spatial dims of f_in and concatenate the skip channels.

    f_skip must be exactly 2x the spatial size of f_in with
    ``p.skip_channels`` channels; pass None when skip_channels is zero.
    """
    B, H, W, _ = f_in.shape
    up = conv_transpose2d(f_in, p.tconv)
    act = leaky_relu(batch_norm(up, p.bn, training), slope)
    if p.skip_channels == 0:
        return act
    if f_skip is None:
        raise DimensionError("stage expects a skip tensor but none was given")
    expected = (B, 2 * H, 2 * W, p.skip_channels)
    if tuple(f_skip.shape) != expected:
        raise DimensionError(
            f"skip tensor shape {tuple(f_skip.shape)} does not match expected {expected}"
        )
    return concat([act, f_skip], axis=-1)


def upsample_chain(
    f: Tensor,
    skips: list,
    stages: list,
    scale: int,
    training: bool = False,
    slope: float = 0.2,
) -> Tensor:
    """Chain log2(scale) stages so output spatial dims are exactly scale x input."""
    if scale not in SUPPORTED_SCALES:
        raise ConfigError(f"scale must be one of {SUPPORTED_SCALES}, got {scale}")
    n = scale.bit_length() - 1
    if len(stages) != n or len(skips) != n:
        raise ConfigError(
            f"scale {scale} needs {n} stages and skips, got {len(stages)} / {len(skips)}"
        )
    for stage, skip in zip(stages, skips):
        f = upsample_stage(f, skip, stage, training=training, slope=slope)
    return f


def nearest_resize(x: Tensor, factor: int) -> Tensor:
    """Nearest-neighbor upsampling by an integer factor on (B,H,W,C)."""
    if x.ndim != 4:
        raise DimensionError(f"nearest_resize input must be rank 4, got {x.shape}")
    if factor < 1:
        raise ContractError(f"resize factor must be >= 1, got {factor}")
    if factor == 1:
        return x
    B, H, W, C = x.shape
    out = np.repeat(np.repeat(x.data, factor, axis=1), factor, axis=2)

    def backward(g):
        blocks = g.reshape(B, H, factor, W, factor, C)
        return (blocks.sum(axis=(2, 4)),)

    return apply_op(out, (x,), backward)
