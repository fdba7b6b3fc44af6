"""Channel attention: dual global pooling through a shared bottleneck MLP,
summed, squashed by a sigmoid, and applied as a per-channel gate.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError, DimensionError
from .layers import dense, global_avg_pool, global_max_pool, relu, sigmoid
from .tensor import Tensor


@dataclass
class ChannelAttentionParams:
    """Shared two-layer MLP: C -> C/r -> C. Both pooled paths reuse w1/b1/w2/b2."""

    w1: Tensor  # (C/r, C)
    b1: Tensor  # (C/r,)
    w2: Tensor  # (C, C/r)
    b2: Tensor  # (C,)
    reduction: int

    def __post_init__(self):
        c = self.w2.shape[0]
        if self.reduction < 1:
            raise ConfigError("reduction must be >= 1")
        if c % self.reduction:
            raise ConfigError(
                f"channel count {c} is not divisible by reduction {self.reduction}"
            )
        hidden = c // self.reduction
        for name, shape in (("w1", (hidden, c)), ("b1", (hidden,)), ("w2", (c, hidden)), ("b2", (c,))):
            got = tuple(getattr(self, name).shape)
            if got != shape:
                raise DimensionError(f"{name} must have shape {shape}, got {got}")


def default_reduction(channels: int) -> int:
    """Reduction ratio: 16 for wide maps, else the divisor closest to C/2.

    Always divides ``channels``, so tiny toy channel counts stay valid.
    """
    divisors = [d for d in range(1, channels + 1) if channels % d == 0]
    target = 16 if channels >= 32 else max(1, channels / 2)
    return min(divisors, key=lambda d: (abs(d - target), d))


def channel_attention(x: Tensor, p: ChannelAttentionParams) -> Tensor:
    """Rescale each channel of (B,H,W,C) by a learned gate in (0, 1)."""
    if x.ndim != 4:
        raise DimensionError(f"channel_attention input must be rank 4, got {x.shape}")
    B, H, W, C = x.shape
    if C != p.w2.shape[0]:
        raise DimensionError(
            f"channel_attention channel mismatch: input has {C}, params expect {p.w2.shape[0]}"
        )

    def bottleneck(pooled):  # shared MLP for both pooling paths
        return dense(relu(dense(pooled, p.w1, p.b1)), p.w2, p.b2)

    scores = bottleneck(global_avg_pool(x)) + bottleneck(global_max_pool(x))
    gate = sigmoid(scores)  # (B, C), strictly inside (0, 1)
    return x * gate.reshape(B, 1, 1, C)
