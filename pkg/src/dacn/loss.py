"""Composite training objective: MSE, scaled L2 weight penalty, and a
spatial-spectral gradient consistency term.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ContractError, DimensionError
from .tensor import Tensor


@dataclass
class LossConfig:
    alpha: float = 1e-4  # L2 regularization strength
    include_grad_loss: bool = True

    def __post_init__(self):
        if self.alpha < 0:
            raise ContractError(f"alpha must be nonnegative, got {self.alpha}")


def mse(y_true: Tensor, y_pred: Tensor) -> Tensor:
    """Mean over all elements of the squared difference."""
    if tuple(y_true.shape) != tuple(y_pred.shape):
        raise DimensionError(
            f"mse shapes differ: {tuple(y_true.shape)} vs {tuple(y_pred.shape)}"
        )
    return ((y_true - y_pred) ** 2).mean()


def l2_penalty(params) -> Tensor:
    """Sum of squares over weight matrices/kernels, excluding biases and
    normalization gamma/beta.

    Accepts a ``DacnParams`` (weights are selected structurally) or any
    iterable of weight tensors.
    """
    weights = _resolve_weights(params)
    total = Tensor(0.0)
    for w in weights:
        total = total + (w**2).sum()
    return total


def _resolve_weights(params):
    if hasattr(params, "blocks"):
        from .model import weight_tensors

        return weight_tensors(params)
    return list(params)


def spatial_spectral_grad_loss(y_true: Tensor, y_pred: Tensor) -> Tensor:
    """Penalty on forward-difference gradients along width, height and bands.

    Each difference image is compared over its valid extent (no padding);
    the spatial terms are averaged separately and added, then the spectral
    term. Constant offsets to either image leave the value unchanged.
    """
    if tuple(y_true.shape) != tuple(y_pred.shape):
        raise DimensionError(
            f"grad loss shapes differ: {tuple(y_true.shape)} vs {tuple(y_pred.shape)}"
        )
    if y_true.ndim != 4:
        raise DimensionError(f"grad loss expects rank-4 inputs, got {y_true.shape}")
    _, H, W, C = y_true.shape
    if H < 2 or W < 2:
        raise ContractError(f"spatial gradients need H, W >= 2, got {H}x{W}")
    if C < 2:
        raise ContractError(f"spectral gradient needs >= 2 bands, got {C}")

    def dx(t):
        return t[:, :, 1:, :] - t[:, :, :-1, :]

    def dy(t):
        return t[:, 1:, :, :] - t[:, :-1, :, :]

    def ds(t):
        return t[:, :, :, 1:] - t[:, :, :, :-1]

    spatial = ((dx(y_true) - dx(y_pred)) ** 2).mean() + ((dy(y_true) - dy(y_pred)) ** 2).mean()
    spectral = ((ds(y_true) - ds(y_pred)) ** 2).mean()
    return spatial + spectral


def total_loss(y_true: Tensor, y_pred: Tensor, params, cfg: LossConfig | None = None) -> Tensor:
    """mse + alpha * l2(params) + spatial-spectral gradient loss."""
    cfg = cfg or LossConfig()
    loss = mse(y_true, y_pred)
    if cfg.alpha > 0:
        loss = loss + cfg.alpha * l2_penalty(params)
    if cfg.include_grad_loss:
        loss = loss + spatial_spectral_grad_loss(y_true, y_pred)
    return loss
