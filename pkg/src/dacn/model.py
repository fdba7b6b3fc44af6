"""Full network assembly: three attention-augmented convolution blocks, one
channel-attention gate, a skip-connected transposed-convolution upsampling
chain, and a linear projection head back to the band-group width.

The network maps a low-resolution band group (B, H, W, G) to (B, sH, sW, G)
for scale s. Whole cubes are handled by running the shared network over
every overlapping band group and averaging the overlaps back together.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from .attention import AugConvBlockParams, MhsaParams, aug_conv_block
from .band_grouping import merge_groups, plan_groups
from .channel_attention import ChannelAttentionParams, channel_attention, default_reduction
from .config_io import format_config, parse_config_text
from .data import HyperCube
from .errors import ConfigError, ContractError, DimensionError, FormatError
from .layers import Conv2DParams, conv2d, fan_in_uniform, norm_state
from .tensor import Tensor, no_grad
from .upsampler import SUPPORTED_SCALES, UpsampleStageParams, nearest_resize, upsample_chain

CHECKPOINT_MAGIC = b"DACN"
CHECKPOINT_VERSION = 1


@dataclass
class DacnConfig:
    """Architecture hyperparameters; everything the paper leaves open is
    pinned here so runs are reproducible."""

    group_size: int = 32
    stride: int | None = None  # band-group stride; None -> group_size // 2
    filters: tuple = (64, 64, 64)
    heads: int = 4
    reduction: int | None = None  # None -> derived from trunk width
    leaky_slope: float = 0.2
    scale: int = 4
    attention_token_cap: int = 4096
    seed: int = 0
    use_mhsa: bool = True
    use_channel_attention: bool = True

    def __post_init__(self):
        self.filters = tuple(int(f) for f in self.filters)
        if self.stride is None:
            self.stride = max(1, self.group_size // 2)
        if self.group_size < 1:
            raise ConfigError(f"group_size must be positive, got {self.group_size}")
        if not 1 <= self.stride <= self.group_size:
            raise ConfigError(
                f"band stride must lie in [1, {self.group_size}], got {self.stride}"
            )
        if len(self.filters) != 3 or any(f < 1 for f in self.filters):
            raise ConfigError(f"filters must be 3 positive widths, got {self.filters}")
        if self.heads < 1:
            raise ConfigError(f"heads must be positive, got {self.heads}")
        for f in self.filters:
            if f < self.heads or f % self.heads:
                raise ConfigError(
                    f"each block width must be a positive multiple of heads={self.heads}, got {f}"
                )
        if self.scale not in SUPPORTED_SCALES:
            raise ConfigError(f"scale must be one of {SUPPORTED_SCALES}, got {self.scale}")
        if not 0.0 < self.leaky_slope < 1.0:
            raise ConfigError(f"leaky_slope must lie in (0, 1), got {self.leaky_slope}")
        if self.attention_token_cap < 1:
            raise ConfigError("attention_token_cap must be positive")
        resolved = self.reduction if self.reduction is not None else default_reduction(self.filters[2])
        if self.filters[2] % resolved:
            raise ConfigError(
                f"reduction {resolved} does not divide trunk width {self.filters[2]}"
            )

    @property
    def resolved_reduction(self) -> int:
        return self.reduction if self.reduction is not None else default_reduction(self.filters[2])

    @property
    def n_stages(self) -> int:
        return self.scale.bit_length() - 1


@dataclass
class DacnParams:
    """Complete learnable state (plus BN running statistics)."""

    blocks: list  # 3x AugConvBlockParams
    ca: ChannelAttentionParams
    up: list  # UpsampleStageParams per 2x stage
    head: Conv2DParams


_CONFIG_KEYS = (
    "group_size",
    "stride",
    "filters",
    "heads",
    "reduction",
    "leaky_slope",
    "scale",
    "attention_token_cap",
    "seed",
    "use_mhsa",
    "use_channel_attention",
)


def config_to_dict(config: DacnConfig) -> dict:
    out = {}
    for key in _CONFIG_KEYS:
        value = getattr(config, key)
        if value is None:
            continue
        out[key] = list(value) if isinstance(value, tuple) else value
    return out


def config_from_dict(values: dict) -> DacnConfig:
    known = {k: v for k, v in values.items() if k in _CONFIG_KEYS}
    unknown = set(values) - set(_CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
    if "filters" in known and isinstance(known["filters"], int):
        known["filters"] = [known["filters"]] * 3
    return DacnConfig(**known)


def init_params(config: DacnConfig, seed: int | None = None) -> DacnParams:
    """Deterministic fan-in-scaled uniform initialization for the given seed.

    BN/LN gamma start at one, all biases and beta at zero; draw order is
    fixed, so identical seeds give bitwise-identical parameters.
    """
    rng = np.random.default_rng(config.seed if seed is None else seed)
    blocks = []
    cin = config.group_size
    for width in config.filters:
        conv = Conv2DParams(
            kernel=fan_in_uniform(rng, (3, 3, cin, width), 9 * cin),
            bias=Tensor(np.zeros(width), requires_grad=True),
            stride=1,
            padding="same",
        )
        dk = width // config.heads
        mh = MhsaParams(
            w_q=fan_in_uniform(rng, (width, width), width),
            w_k=fan_in_uniform(rng, (width, width), width),
            w_v=fan_in_uniform(rng, (width, width), width),
            w_o=fan_in_uniform(rng, (width, width), width),
            heads=config.heads,
            d_k=dk,
            d_v=dk,
        )
        blocks.append(
            AugConvBlockParams(
                conv=conv,
                bn=norm_state(width),
                mhsa=mh,
                ln_gamma=Tensor(np.ones(width), requires_grad=True),
                ln_beta=Tensor(np.zeros(width), requires_grad=True),
            )
        )
        cin = width
    trunk = config.filters[2]
    r = config.resolved_reduction
    hidden = trunk // r
    ca = ChannelAttentionParams(
        w1=fan_in_uniform(rng, (hidden, trunk), trunk),
        b1=Tensor(np.zeros(hidden), requires_grad=True),
        w2=fan_in_uniform(rng, (trunk, hidden), hidden),
        b2=Tensor(np.zeros(trunk), requires_grad=True),
        reduction=r,
    )
    stages = []
    c = trunk
    for _ in range(config.n_stages):
        # tconv kernel axes follow the adjoint-of-conv layout: (kh, kw, out, in)
        stages.append(
            UpsampleStageParams(
                tconv=Conv2DParams(
                    kernel=fan_in_uniform(rng, (4, 4, trunk, c), 16 * c),
                    bias=Tensor(np.zeros(trunk), requires_grad=True),
                    stride=2,
                ),
                bn=norm_state(trunk),
                skip_channels=config.group_size,
            )
        )
        c = trunk + config.group_size
    head = Conv2DParams(
        kernel=fan_in_uniform(rng, (3, 3, c, config.group_size), 9 * c),
        bias=Tensor(np.zeros(config.group_size), requires_grad=True),
        stride=1,
        padding="same",
    )
    return DacnParams(blocks=blocks, ca=ca, up=stages, head=head)


def forward(y: Tensor, params: DacnParams, config: DacnConfig, training: bool = False) -> Tensor:
    """(B, H, W, G) -> (B, sH, sW, G) for scale s.

    Trunk blocks run at input resolution; each upsampling stage
    concatenates a nearest-neighbor-resized copy of the network input as
    its skip tensor; a 3x3 linear head restores the band-group width.
    """
    if y.ndim != 4:
        raise DimensionError(f"forward input must be rank 4, got {y.shape}")
    B, H, W, G = y.shape
    if G != config.group_size:
        raise DimensionError(
            f"input has {G} bands, config.group_size is {config.group_size}"
        )
    if H * W > config.attention_token_cap:
        raise ConfigError(
            f"patch of {H}x{W}={H * W} tokens exceeds attention_token_cap "
            f"{config.attention_token_cap}"
        )
    x = y
    for block in params.blocks:
        x = aug_conv_block(
            x,
            block,
            training,
            slope=config.leaky_slope,
            use_mhsa=config.use_mhsa,
            token_cap=config.attention_token_cap,
        )
    if config.use_channel_attention:
        x = channel_attention(x, params.ca)
    skips = [nearest_resize(y, 2 ** (i + 1)) for i in range(config.n_stages)]
    x = upsample_chain(
        x, skips, params.up, config.scale, training=training, slope=config.leaky_slope
    )
    return conv2d(x, params.head)


def super_resolve(cube: HyperCube, params: DacnParams, config: DacnConfig) -> HyperCube:
    """Plan band groups, reconstruct each with the shared network, merge the
    overlaps, and clamp the result into [0, 1]."""
    if cube.bands < config.group_size:
        raise ContractError(
            f"cube has {cube.bands} bands, fewer than group size {config.group_size}"
        )
    plan = plan_groups(cube.bands, config.group_size, config.stride)
    preds = []
    with no_grad():
        for start, end in plan.groups:
            group = Tensor(cube.values[None, :, :, start:end])
            preds.append(forward(group, params, config, training=False).data[0])
    merged = merge_groups(preds, plan).data
    return HyperCube(np.clip(merged, 0.0, 1.0), value_range=(0.0, 1.0))


# -- parameter bookkeeping ----------------------------------------------------


def named_parameters(params: DacnParams) -> dict:
    """Ordered name -> Tensor map of every learnable parameter."""
    out: dict[str, Tensor] = {}
    for i, blk in enumerate(params.blocks):
        prefix = f"blocks.{i}"
        out[f"{prefix}.conv.kernel"] = blk.conv.kernel
        out[f"{prefix}.conv.bias"] = blk.conv.bias
        out[f"{prefix}.bn.gamma"] = blk.bn.gamma
        out[f"{prefix}.bn.beta"] = blk.bn.beta
        out[f"{prefix}.mhsa.w_q"] = blk.mhsa.w_q
        out[f"{prefix}.mhsa.w_k"] = blk.mhsa.w_k
        out[f"{prefix}.mhsa.w_v"] = blk.mhsa.w_v
        out[f"{prefix}.mhsa.w_o"] = blk.mhsa.w_o
        out[f"{prefix}.ln_gamma"] = blk.ln_gamma
        out[f"{prefix}.ln_beta"] = blk.ln_beta
    out["ca.w1"] = params.ca.w1
    out["ca.b1"] = params.ca.b1
    out["ca.w2"] = params.ca.w2
    out["ca.b2"] = params.ca.b2
    for i, stage in enumerate(params.up):
        out[f"up.{i}.tconv.kernel"] = stage.tconv.kernel
        out[f"up.{i}.tconv.bias"] = stage.tconv.bias
        out[f"up.{i}.bn.gamma"] = stage.bn.gamma
        out[f"up.{i}.bn.beta"] = stage.bn.beta
    out["head.kernel"] = params.head.kernel
    out["head.bias"] = params.head.bias
    return out


def state_tensors(params: DacnParams) -> dict:
    """named_parameters plus BN running statistics (checkpoint contents)."""
    out = named_parameters(params)
    for i, blk in enumerate(params.blocks):
        out[f"blocks.{i}.bn.running_mean"] = blk.bn.running_mean
        out[f"blocks.{i}.bn.running_var"] = blk.bn.running_var
    for i, stage in enumerate(params.up):
        out[f"up.{i}.bn.running_mean"] = stage.bn.running_mean
        out[f"up.{i}.bn.running_var"] = stage.bn.running_var
    return out


def weight_tensors(params: DacnParams) -> list:
    """Weight matrices/kernels only — the L2-regularized subset."""
    out = []
    for blk in params.blocks:
        out.append(blk.conv.kernel)
        out.extend([blk.mhsa.w_q, blk.mhsa.w_k, blk.mhsa.w_v, blk.mhsa.w_o])
    out.extend([params.ca.w1, params.ca.w2])
    for stage in params.up:
        out.append(stage.tconv.kernel)
    out.append(params.head.kernel)
    return out


def trainable_parameters(params: DacnParams, config: DacnConfig) -> dict:
    """named_parameters restricted to branches the config actually runs."""
    out = named_parameters(params)
    if not config.use_mhsa:
        out = {k: v for k, v in out.items() if ".mhsa." not in k}
    if not config.use_channel_attention:
        out = {k: v for k, v in out.items() if not k.startswith("ca.")}
    return out


def clone_params(params: DacnParams) -> DacnParams:
    """Deep copy of every tensor (used to snapshot best-epoch weights)."""
    target = init_like(params)
    src, dst = state_tensors(params), state_tensors(target)
    for name, tensor in src.items():
        dst[name].data = tensor.data.copy()
    return target


def init_like(params: DacnParams) -> DacnParams:
    blocks = []
    for blk in params.blocks:
        blocks.append(
            AugConvBlockParams(
                conv=replace(blk.conv, kernel=_blank(blk.conv.kernel), bias=_blank(blk.conv.bias)),
                bn=replace(
                    blk.bn,
                    gamma=_blank(blk.bn.gamma),
                    beta=_blank(blk.bn.beta),
                    running_mean=_blank(blk.bn.running_mean, grad=False),
                    running_var=_blank(blk.bn.running_var, grad=False),
                ),
                mhsa=replace(
                    blk.mhsa,
                    w_q=_blank(blk.mhsa.w_q),
                    w_k=_blank(blk.mhsa.w_k),
                    w_v=_blank(blk.mhsa.w_v),
                    w_o=_blank(blk.mhsa.w_o),
                ),
                ln_gamma=_blank(blk.ln_gamma),
                ln_beta=_blank(blk.ln_beta),
            )
        )
    ca = replace(
        params.ca,
        w1=_blank(params.ca.w1),
        b1=_blank(params.ca.b1),
        w2=_blank(params.ca.w2),
        b2=_blank(params.ca.b2),
    )
    up = [
        UpsampleStageParams(
            tconv=replace(st.tconv, kernel=_blank(st.tconv.kernel), bias=_blank(st.tconv.bias)),
            bn=replace(
                st.bn,
                gamma=_blank(st.bn.gamma),
                beta=_blank(st.bn.beta),
                running_mean=_blank(st.bn.running_mean, grad=False),
                running_var=_blank(st.bn.running_var, grad=False),
            ),
            skip_channels=st.skip_channels,
        )
        for st in params.up
    ]
    head = replace(params.head, kernel=_blank(params.head.kernel), bias=_blank(params.head.bias))
    return DacnParams(blocks=blocks, ca=ca, up=up, head=head)


def _blank(t: Tensor, grad: bool | None = None) -> Tensor:
    return Tensor(t.data.copy(), requires_grad=t.requires_grad if grad is None else grad)


# -- checkpoint serialization -------------------------------------------------


def save_checkpoint(path, params: DacnParams, config: DacnConfig) -> None:
    """Binary checkpoint: magic DACN, version, config text, then each tensor
    as (name length, name, rank, dims, float32 little-endian values)."""
    payload = format_config(config_to_dict(config)).encode("utf-8")
    entries = state_tensors(params)
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(struct.pack("<I", len(payload)))
        f.write(payload)
        f.write(struct.pack("<I", len(entries)))
        for name, tensor in entries.items():
            raw = name.encode("utf-8")
            arr = np.ascontiguousarray(tensor.data, dtype="<f4")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def load_checkpoint(path):
    """Read a DACN checkpoint back into (params, config)."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}, expected {CHECKPOINT_MAGIC!r}")
    pos = 4
    version, pos = _read_u32(blob, pos, path)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    cfg_len, pos = _read_u32(blob, pos, path)
    if pos + cfg_len > len(blob):
        raise FormatError(f"{path}: truncated config block")
    config = config_from_dict(parse_config_text(blob[pos : pos + cfg_len].decode("utf-8")))
    pos += cfg_len
    count, pos = _read_u32(blob, pos, path)
    params = init_params(config)
    targets = state_tensors(params)
    seen = set()
    for _ in range(count):
        name_len, pos = _read_u32(blob, pos, path)
        name = blob[pos : pos + name_len].decode("utf-8")
        pos += name_len
        rank, pos = _read_u32(blob, pos, path)
        dims = []
        for _ in range(rank):
            d, pos = _read_u32(blob, pos, path)
            dims.append(d)
        n = int(np.prod(dims)) if dims else 1
        end = pos + 4 * n
        if end > len(blob):
            raise FormatError(f"{path}: truncated tensor payload for {name!r}")
        arr = np.frombuffer(blob[pos:end], dtype="<f4").reshape(dims)
        pos = end
        if name not in targets:
            raise FormatError(f"{path}: unexpected tensor {name!r}")
        if tuple(arr.shape) != tuple(targets[name].shape):
            raise FormatError(
                f"{path}: tensor {name!r} has shape {arr.shape}, expected {targets[name].shape}"
            )
        targets[name].data = arr.astype(np.float64)
        seen.add(name)
    missing = set(targets) - seen
    if missing:
        raise FormatError(f"{path}: checkpoint is missing tensors {sorted(missing)}")
    if pos != len(blob):
        raise FormatError(f"{path}: {len(blob) - pos} trailing bytes")
    return params, config


def _read_u32(blob: bytes, pos: int, path) -> tuple[int, int]:
    if pos + 4 > len(blob):
        raise FormatError(f"{path}: truncated checkpoint")
    return struct.unpack_from("<I", blob, pos)[0], pos + 4
