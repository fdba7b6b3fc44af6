"""Hyperspectral cube I/O, normalization, area degradation, patch
extraction, dataset splits, and a synthetic cube generator for desk-scale
experiments.

The on-disk HSC1 format is fixed-endianness and bit-exact: magic ``HSC1``,
then little-endian uint32 height/width/bands, then height*width*bands
little-endian float32 values in band-sequential order (full spatial plane
of band 0, then band 1, ...).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, FormatError

HSC_MAGIC = b"HSC1"
_MAX_ELEMENTS = 2**31  # dimension-overflow guard for untrusted headers


@dataclass
class HyperCube:
    """One hyperspectral image: values shaped (height, width, bands)."""

    values: np.ndarray
    value_range: tuple = (0.0, 1.0)
    source_range: tuple | None = None  # pre-normalization range, if any

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3:
            raise ContractError(f"cube values must be rank 3, got {self.values.shape}")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def bands(self) -> int:
        return self.values.shape[2]


@dataclass
class DatasetSplit:
    """Seeded, disjoint train/val/test partition of extracted patches."""

    train: list
    val: list
    test: list
    patch_size: int
    scale: int
    seed: int
    roles: list = field(default_factory=list)  # role of patch i, raster order


def write_cube(cube: HyperCube, path) -> None:
    arr = np.ascontiguousarray(cube.values.transpose(2, 0, 1), dtype="<f4")
    with open(path, "wb") as f:
        f.write(HSC_MAGIC)
        f.write(struct.pack("<III", cube.height, cube.width, cube.bands))
        f.write(arr.tobytes())


def read_cube(path) -> HyperCube:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != HSC_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}, expected {HSC_MAGIC!r}")
    if len(blob) < 16:
        raise FormatError(f"{path}: truncated header")
    h, w, b = struct.unpack("<III", blob[4:16])
    if h < 1 or w < 1 or b < 1 or h * w * b > _MAX_ELEMENTS:
        raise FormatError(f"{path}: implausible dimensions {h}x{w}x{b}")
    expected = 16 + 4 * h * w * b
    if len(blob) != expected:
        raise FormatError(
            f"{path}: payload is {len(blob)} bytes, expected {expected} for {h}x{w}x{b}"
        )
    arr = np.frombuffer(blob, dtype="<f4", offset=16).reshape(b, h, w)
    values = arr.transpose(1, 2, 0).astype(np.float64)
    lo, hi = float(values.min()), float(values.max())
    return HyperCube(values, value_range=(lo, hi))


def normalize(cube: HyperCube) -> HyperCube:
    """Global min-max scaling into [0, 1]; the original range is retained."""
    lo, hi = float(cube.values.min()), float(cube.values.max())
    if hi <= lo:
        raise ContractError("cannot normalize a constant cube (max == min)")
    scaled = (cube.values - lo) / (hi - lo)
    return HyperCube(scaled, value_range=(0.0, 1.0), source_range=(lo, hi))


def degrade_array(arr: np.ndarray, beta: int) -> np.ndarray:
    """Block means over beta x beta tiles on (..., H, W, C)-like arrays.

    The beta^2 offsets are reduced as a balanced pairwise tree in row-major
    order: beta^2 is a power of four, so sums of equal values stay exact at
    every level and constant blocks reduce to exactly their constant.
    """
    h_axis, w_axis = arr.ndim - 3, arr.ndim - 2
    H, W = arr.shape[h_axis], arr.shape[w_axis]
    if beta < 1:
        raise ContractError(f"scale must be >= 1, got {beta}")
    if H % beta or W % beta:
        raise ContractError(
            f"spatial dims {H}x{W} are not divisible by scale {beta}"
        )
    index = [slice(None)] * arr.ndim
    slabs = []
    for di in range(beta):
        for dj in range(beta):
            index[h_axis] = slice(di, None, beta)
            index[w_axis] = slice(dj, None, beta)
            slabs.append(arr[tuple(index)])
    while len(slabs) > 1:
        slabs = [slabs[i] + slabs[i + 1] for i in range(0, len(slabs), 2)]
    return slabs[0] / (beta * beta)


def degrade_area(cube: HyperCube, beta: int) -> HyperCube:
    """Area-based downsampling: each output pixel is the mean of its
    beta x beta source block, per band."""
    return HyperCube(
        degrade_array(cube.values, beta),
        value_range=cube.value_range,
        source_range=cube.source_range,
    )


def extract_patches(cube: HyperCube, patch_size: int = 144, stride: int | None = None):
    """Raster-order grid of square patches; partial edge patches are dropped."""
    if patch_size < 1:
        raise ContractError(f"patch_size must be positive, got {patch_size}")
    stride = stride or patch_size
    if cube.height < patch_size or cube.width < patch_size:
        raise ContractError(
            f"cube {cube.height}x{cube.width} is smaller than patch size {patch_size}"
        )
    patches = []
    for top in range(0, cube.height - patch_size + 1, stride):
        for left in range(0, cube.width - patch_size + 1, stride):
            patches.append(
                HyperCube(
                    cube.values[top : top + patch_size, left : left + patch_size, :].copy(),
                    value_range=cube.value_range,
                )
            )
    return patches


def split_patches(
    patches,
    scale: int,
    seed: int = 0,
    patch_size: int | None = None,
    ratios: tuple = (0.7, 0.15, 0.15),
) -> DatasetSplit:
    """Seeded 70/15/15 (by default) partition; train and val are never empty
    when at least two patches exist."""
    n = len(patches)
    if n == 0:
        raise ContractError("no patches to split")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_train = max(1, int(round(ratios[0] * n)))
    n_val = max(1, int(round(ratios[1] * n))) if n > 1 else 0
    while n_train + n_val > n:
        n_train -= 1
    roles = [""] * n
    for pos, idx in enumerate(order):
        roles[idx] = "train" if pos < n_train else "val" if pos < n_train + n_val else "test"
    split = DatasetSplit(
        train=[patches[i] for i in range(n) if roles[i] == "train"],
        val=[patches[i] for i in range(n) if roles[i] == "val"],
        test=[patches[i] for i in range(n) if roles[i] == "test"],
        patch_size=patch_size or patches[0].height,
        scale=scale,
        seed=seed,
        roles=roles,
    )
    return split


def split_manifest(split: DatasetSplit) -> str:
    """UTF-8 manifest: one ``patch_index,role`` line per patch."""
    return "".join(f"{i},{role}\n" for i, role in enumerate(split.roles))


def synth_cube(
    height: int,
    width: int,
    bands: int,
    rank: int = 4,
    noise: float = 0.0,
    seed: int = 0,
) -> HyperCube:
    """Deterministic synthetic cube: a sum of ``rank`` smooth positive
    spatial fields times smooth spectral signatures, plus Gaussian noise,
    scaled into [0, 1].

    Scaling divides by the global max (clipping negatives introduced by
    noise), so with noise=0 every pixel spectrum stays an exact positive
    multiple of the signatures — rank 1 gives zero spectral angle between
    pixels.
    """
    if rank < 1 or rank > bands:
        raise ContractError(f"rank must lie in [1, bands]={bands}, got {rank}")
    rng = np.random.default_rng(seed)
    rows = np.arange(height)[:, None]
    cols = np.arange(width)[None, :]
    band_idx = np.arange(bands)
    cube = np.zeros((height, width, bands))
    for _ in range(rank):
        fy, fx = rng.integers(1, 4, size=2)
        py, px = rng.uniform(0, 1, size=2)
        spatial = 1.0 + 0.8 * np.cos(2 * np.pi * (fy * rows / height + py)) * np.cos(
            2 * np.pi * (fx * cols / width + px)
        )
        signature = np.full(bands, 0.05)
        for _ in range(3):
            center = rng.uniform(0, bands)
            width_b = rng.uniform(bands / 8, bands / 4)
            weight = rng.uniform(0.5, 1.0)
            signature = signature + weight * np.exp(-((band_idx - center) ** 2) / (2 * width_b**2))
        cube += spatial[:, :, None] * signature[None, None, :]
    if noise > 0:
        cube = cube + noise * rng.normal(size=cube.shape)
        cube = np.maximum(cube, 0.0)
    cube = cube / cube.max()
    return HyperCube(cube, value_range=(0.0, 1.0))
