"""Convolutional and normalization primitives used by every network block.

All ops are differentiable through the tape in :mod:`dacn.tensor`; the
convolutions carry hand-derived backward rules, the normalizations are
composed from recorded elementwise/reduction ops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, DimensionError
from .tensor import Tensor, apply_op

BN_EPSILON = 1e-5
BN_MOMENTUM = 0.9
LN_EPSILON = 1e-5


@dataclass
class Conv2DParams:
    """Weights of one (transposed) convolution.

    ``kernel`` axes are (kh, kw, c_in, c_out) as consumed by ``conv2d``.
    ``conv_transpose2d`` runs the same kernel in reverse — it is the exact
    adjoint of ``conv2d`` with identical params — so there its input binds
    to the c_out axis and its output (and ``bias``) to the c_in axis.
    """

    kernel: Tensor
    bias: Tensor
    stride: int = 1
    padding: str = "same"  # {"same", "valid"}

    def __post_init__(self):
        if self.kernel.ndim != 4:
            raise DimensionError(
                f"conv kernel must have rank 4 (kh, kw, c_in, c_out), got {self.kernel.shape}"
            )
        if self.kernel.shape[0] < 1 or self.kernel.shape[1] < 1:
            raise ContractError("kernel spatial dims must be >= 1")
        if self.bias.ndim != 1:
            raise DimensionError(f"bias must be rank 1, got {self.bias.shape}")
        if self.stride < 1:
            raise ContractError(f"stride must be >= 1, got {self.stride}")
        if self.padding not in ("same", "valid"):
            raise ConfigError(f"padding must be 'same' or 'valid', got {self.padding!r}")


@dataclass
class NormState:
    """Scale/shift plus running statistics for batch normalization.

    Layer normalization reuses only gamma/beta/epsilon. ``running_*`` are
    state, not parameters: updated single-writer during training passes.
    """

    gamma: Tensor
    beta: Tensor
    running_mean: Tensor = None
    running_var: Tensor = None
    epsilon: float = BN_EPSILON
    momentum: float = BN_MOMENTUM

    def __post_init__(self):
        c = self.gamma.shape[0]
        if self.running_mean is None:
            self.running_mean = Tensor(np.zeros(c))
        if self.running_var is None:
            self.running_var = Tensor(np.ones(c))
        if self.epsilon <= 0:
            raise ContractError("epsilon must be positive")
        if not 0.0 < self.momentum < 1.0:
            raise ContractError("momentum must lie in (0, 1)")
        if np.any(self.running_var.data < 0):
            raise ContractError("running_var must be nonnegative")


def norm_state(channels: int) -> NormState:
    return NormState(
        gamma=Tensor(np.ones(channels), requires_grad=True),
        beta=Tensor(np.zeros(channels), requires_grad=True),
    )


def _same_pads(size: int, k: int, s: int) -> tuple[int, int, int]:
    out = -(-size // s)  # ceil
    total = max((out - 1) * s + k - size, 0)
    return out, total // 2, total - total // 2


def conv2d(x: Tensor, p: Conv2DParams) -> Tensor:
    """Cross-correlation plus bias over (batch, height, width, channels)."""
    kd, bd, s = p.kernel.data, p.bias.data, p.stride
    kh, kw, cin, cout = kd.shape
    if x.ndim != 4:
        raise DimensionError(f"conv2d input must be rank 4, got {x.shape}")
    B, H, W, C = x.shape
    if C != cin:
        raise DimensionError(
            f"conv2d channel mismatch: input has {C} channels, kernel expects {cin}"
        )
    if bd.shape[0] != cout:
        raise DimensionError(
            f"conv2d bias length {bd.shape[0]} != output channels {cout}"
        )
    if p.padding == "same":
        Ho, pt, pb = _same_pads(H, kh, s)
        Wo, pl, pr = _same_pads(W, kw, s)
    else:
        if kh > H or kw > W:
            raise DimensionError(
                f"valid conv kernel {kh}x{kw} larger than input {H}x{W}"
            )
        Ho, Wo = (H - kh) // s + 1, (W - kw) // s + 1
        pt = pb = pl = pr = 0
    xp = np.pad(x.data, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    out = np.zeros((B, Ho, Wo, cout), dtype=np.result_type(xp, kd))
    for i in range(kh):
        for j in range(kw):
            out += xp[:, i : i + Ho * s : s, j : j + Wo * s : s, :] @ kd[i, j]
    out += bd

    def backward(g):
        gx = gk = gb = None
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, i : i + Ho * s : s, j : j + Wo * s : s, :] += g @ kd[i, j].T
            gx = gxp[:, pt : pt + H, pl : pl + W, :]
        if p.kernel.requires_grad:
            gk = np.empty_like(kd)
            for i in range(kh):
                for j in range(kw):
                    patch = xp[:, i : i + Ho * s : s, j : j + Wo * s : s, :]
                    gk[i, j] = np.tensordot(patch, g, axes=([0, 1, 2], [0, 1, 2]))
        if p.bias.requires_grad:
            gb = g.sum(axis=(0, 1, 2))
        return gx, gk, gb

    return apply_op(out, (x, p.kernel, p.bias), backward)


def conv_transpose2d(x: Tensor, p: Conv2DParams) -> Tensor:
    """Adjoint of ``conv2d`` with the same kernel: spatial dims grow by stride.

    With kernel (kh, kw, a, b) the input must carry b channels and the
    output carries a; cropping is fixed at (k - s) / 2 per side so the
    output is exactly stride x input. Requires k >= s with matching parity.
    """
    kd, bd, s = p.kernel.data, p.bias.data, p.stride
    kh, kw, cto, cfrom = kd.shape
    if x.ndim != 4:
        raise DimensionError(f"conv_transpose2d input must be rank 4, got {x.shape}")
    B, H, W, C = x.shape
    if C != cfrom:
        raise DimensionError(
            f"conv_transpose2d channel mismatch: input has {C} channels, kernel expects {cfrom}"
        )
    if bd.shape[0] != cto:
        raise DimensionError(
            f"conv_transpose2d bias length {bd.shape[0]} != output channels {cto}"
        )
    if kh < s or kw < s or (kh - s) % 2 or (kw - s) % 2:
        raise ConfigError(
            f"kernel {kh}x{kw} with stride {s} cannot produce an exact {s}x upsample"
        )
    ph, pw = (kh - s) // 2, (kw - s) // 2
    Hf, Wf = s * (H - 1) + kh, s * (W - 1) + kw
    full = np.zeros((B, Hf, Wf, cto), dtype=np.result_type(x.data, kd))
    for i in range(kh):
        for j in range(kw):
            full[:, i : i + s * H : s, j : j + s * W : s, :] += x.data @ kd[i, j].T
    out = full[:, ph : ph + s * H, pw : pw + s * W, :] + bd

    def backward(g):
        gfull = np.zeros((B, Hf, Wf, cto), dtype=g.dtype)
        gfull[:, ph : ph + s * H, pw : pw + s * W, :] = g
        gx = gk = gb = None
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            for i in range(kh):
                for j in range(kw):
                    gx += gfull[:, i : i + s * H : s, j : j + s * W : s, :] @ kd[i, j]
        if p.kernel.requires_grad:
            gk = np.empty_like(kd)
            for i in range(kh):
                for j in range(kw):
                    patch = gfull[:, i : i + s * H : s, j : j + s * W : s, :]
                    gk[i, j] = np.tensordot(patch, x.data, axes=([0, 1, 2], [0, 1, 2]))
        if p.bias.requires_grad:
            gb = g.sum(axis=(0, 1, 2))
        return gx, gk, gb

    return apply_op(out, (x, p.kernel, p.bias), backward)


def batch_norm(x: Tensor, state: NormState, training: bool) -> Tensor:
    """Per-channel standardization over (batch, height, width).

    Training mode normalizes with batch statistics and updates the running
    averages; inference mode uses the stored running statistics.
    """
    if x.ndim != 4:
        raise DimensionError(f"batch_norm input must be rank 4, got {x.shape}")
    B, H, W, C = x.shape
    if C != state.gamma.shape[0]:
        raise DimensionError(
            f"batch_norm channel mismatch: input has {C}, state has {state.gamma.shape[0]}"
        )
    if training:
        if B * H * W < 2:
            raise ContractError(
                "batch_norm in training mode needs at least 2 samples per channel"
            )
        m = x.mean(axis=(0, 1, 2), keepdims=True)
        centered = x - m
        var = (centered**2).mean(axis=(0, 1, 2), keepdims=True)
        mom = state.momentum
        state.running_mean.data = mom * state.running_mean.data + (1 - mom) * m.data.reshape(C)
        state.running_var.data = mom * state.running_var.data + (1 - mom) * var.data.reshape(C)
        xhat = centered / (var + state.epsilon).sqrt()
    else:
        denom = np.sqrt(state.running_var.data + state.epsilon)
        xhat = (x - state.running_mean.data) / denom
    return xhat * state.gamma + state.beta


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, epsilon: float = LN_EPSILON) -> Tensor:
    """Normalization over the channel axis at each spatial position, then scale/shift."""
    if x.shape[-1] != gamma.shape[0]:
        raise DimensionError(
            f"layer_norm channel mismatch: input has {x.shape[-1]}, gamma has {gamma.shape[0]}"
        )
    m = x.mean(axis=-1, keepdims=True)
    centered = x - m
    var = (centered**2).mean(axis=-1, keepdims=True)
    return centered / (var + epsilon).sqrt() * gamma + beta


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0.0)
    mask = x.data > 0

    def backward(g):
        return (g * mask,)

    return apply_op(out, (x,), backward)


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    out = np.where(x.data > 0, x.data, slope * x.data)
    factor = np.where(x.data > 0, 1.0, slope)

    def backward(g):
        return (g * factor,)

    return apply_op(out, (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    # split by sign to avoid overflow in exp; clamp into the open interval so
    # saturation never rounds to exactly 0 or 1
    d = x.data
    e = np.exp(-np.abs(d))
    out = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    out = np.clip(out, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))

    def backward(g):
        return (g * out * (1.0 - out),)

    return apply_op(out, (x,), backward)


def global_avg_pool(x: Tensor) -> Tensor:
    """Per-channel mean over all spatial positions: (B,H,W,C) -> (B,C)."""
    if x.ndim != 4:
        raise DimensionError(f"global_avg_pool input must be rank 4, got {x.shape}")
    return x.mean(axis=(1, 2))


def global_max_pool(x: Tensor) -> Tensor:
    """Per-channel max over all spatial positions: (B,H,W,C) -> (B,C).

    Gradient routes to the first spatial argmax per (batch, channel).
    """
    if x.ndim != 4:
        raise DimensionError(f"global_max_pool input must be rank 4, got {x.shape}")
    B, H, W, C = x.shape
    flat = x.data.reshape(B, H * W, C)
    idx = flat.argmax(axis=1)
    out = np.take_along_axis(flat, idx[:, None, :], axis=1)[:, 0, :]

    def backward(g):
        gf = np.zeros_like(flat)
        np.put_along_axis(gf, idx[:, None, :], g[:, None, :], axis=1)
        return (gf.reshape(x.shape),)

    return apply_op(out, (x,), backward)


def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map (B, d_in) -> (B, d_out) with weight shaped (d_out, d_in)."""
    if x.shape[-1] != weight.shape[1]:
        raise DimensionError(
            f"dense: input width {x.shape[-1]} != weight d_in {weight.shape[1]}"
        )
    return x @ weight.transpose((1, 0)) + bias


def fan_in_uniform(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    """Fan-in-scaled uniform initialization (variance 1/fan_in)."""
    limit = math.sqrt(3.0 / fan_in)
    return Tensor(rng.uniform(-limit, limit, size=shape), requires_grad=True)
