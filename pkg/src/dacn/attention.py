"""Multi-head self-attention over flattened spatial positions, and the
attention-augmented convolution block built on it.

Tokens are the row-major spatial positions of a feature map; no positional
encoding is used, so the attention is permutation-equivariant over tokens.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError, DimensionError
from .layers import Conv2DParams, NormState, batch_norm, conv2d, layer_norm, leaky_relu
from .tensor import Dims2D, Tensor, matmul, softmax_rows

DEFAULT_TOKEN_CAP = 4096


@dataclass
class MhsaParams:
    """Projection weights for multi-head self-attention.

    w_q/w_k are (d_model, heads*d_k), w_v is (d_model, heads*d_v) and w_o
    is (heads*d_v, d_model).
    """

    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    w_o: Tensor
    heads: int
    d_k: int
    d_v: int

    def __post_init__(self):
        d_model = self.w_q.shape[0]
        if self.heads < 1 or self.d_k < 1 or self.d_v < 1:
            raise ConfigError("heads, d_k and d_v must be positive")
        expect = {
            "w_q": (d_model, self.heads * self.d_k),
            "w_k": (d_model, self.heads * self.d_k),
            "w_v": (d_model, self.heads * self.d_v),
            "w_o": (self.heads * self.d_v, d_model),
        }
        for name, shape in expect.items():
            got = getattr(self, name).shape
            if tuple(got) != shape:
                raise DimensionError(f"{name} must have shape {shape}, got {got}")

    @property
    def d_model(self) -> int:
        return self.w_q.shape[0]


@dataclass
class AugConvBlockParams:
    """One conv -> BN -> LeakyReLU -> MHSA -> residual -> layer-norm block."""

    conv: Conv2DParams
    bn: NormState
    mhsa: MhsaParams
    ln_gamma: Tensor
    ln_beta: Tensor

    def __post_init__(self):
        cout = self.conv.kernel.shape[3]
        if not (cout == self.mhsa.d_model == self.ln_gamma.shape[0] == self.ln_beta.shape[0]):
            raise DimensionError(
                "conv output channels, attention width and layer-norm width must agree: "
                f"{cout} / {self.mhsa.d_model} / {self.ln_gamma.shape[0]}"
            )


def mhsa(x: Tensor, p: MhsaParams, token_cap: int = DEFAULT_TOKEN_CAP) -> Tensor:
    """Scaled dot-product attention per head, heads concatenated then projected.

    x is (B, T, d_model); every attention row softmaxes to one over the T
    keys. Attention is O(T^2), so sequences longer than ``token_cap`` are
    rejected up front.
    """
    if x.ndim != 3:
        raise DimensionError(f"mhsa input must be rank 3 (B, T, d_model), got {x.shape}")
    B, T, D = x.shape
    if D != p.d_model:
        raise DimensionError(f"mhsa width mismatch: input {D}, params {p.d_model}")
    if token_cap is not None and T > token_cap:
        raise ConfigError(
            f"sequence length {T} exceeds the attention token cap {token_cap}; "
            "use smaller patches or raise attention_token_cap"
        )
    h, dk, dv = p.heads, p.d_k, p.d_v

    def split_heads(t, width):  # (B,T,h*width) -> (B,h,T,width)
        return t.reshape(B, T, h, width).transpose((0, 2, 1, 3))

    q = split_heads(matmul(x, p.w_q), dk)
    k = split_heads(matmul(x, p.w_k), dk)
    v = split_heads(matmul(x, p.w_v), dv)
    scores = matmul(q, k.transpose((0, 1, 3, 2))) * (1.0 / math.sqrt(dk))
    weights = softmax_rows(scores)  # rows sum to 1 over the key axis
    ctx = matmul(weights, v)  # (B,h,T,dv)
    merged = ctx.transpose((0, 2, 1, 3)).reshape(B, T, h * dv)
    return matmul(merged, p.w_o)


def spatial_flatten(x: Tensor) -> Tensor:
    """(B, H, W, C) -> (B, H*W, C), row-major over spatial positions."""
    if x.ndim != 4:
        raise DimensionError(f"spatial_flatten input must be rank 4, got {x.shape}")
    B, H, W, C = x.shape
    return x.reshape(B, H * W, C)


def spatial_unflatten(x: Tensor, dims: Dims2D) -> Tensor:
    """Inverse of :func:`spatial_flatten`; validates the element count."""
    if x.ndim != 3:
        raise DimensionError(f"spatial_unflatten input must be rank 3, got {x.shape}")
    B, T, C = x.shape
    if T != dims.height * dims.width or C != dims.channels:
        raise DimensionError(
            f"cannot unflatten (T={T}, C={C}) into {dims.height}x{dims.width}x{dims.channels}"
        )
    return x.reshape(B, dims.height, dims.width, C)


def aug_conv_block(
    x: Tensor,
    p: AugConvBlockParams,
    training: bool,
    slope: float = 0.2,
    use_mhsa: bool = True,
    token_cap: int = DEFAULT_TOKEN_CAP,
) -> Tensor:
    """conv -> BN -> LeakyReLU, plus an attention residual, then layer norm.

    Spatial dimensions are preserved (the conv must use same padding at
    stride 1). With ``use_mhsa=False`` the attention branch contributes
    zero, leaving layer_norm(conv activations) with identical shapes.
    """
    z = conv2d(x, p.conv)
    x_out = leaky_relu(batch_norm(z, p.bn, training), slope)
    if use_mhsa:
        B, H, W, C = x_out.shape
        seq = spatial_flatten(x_out)
        z_attn = spatial_unflatten(mhsa(seq, p.mhsa, token_cap), Dims2D(H, W, C))
        residual = x_out + z_attn
    else:
        residual = x_out
    return layer_norm(residual, p.ln_gamma, p.ln_beta)
