"""Overlapping band grouping: partition the spectral axis into fixed-size
groups sharing bands with their neighbors, and merge per-group predictions
back into a full cube.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .tensor import Tensor


@dataclass
class BandGroupPlan:
    """Fixed-size overlapping [start, end) ranges covering all bands.

    Consecutive groups share exactly ``group_size - stride`` bands; the last
    group is right-aligned to end at ``total_bands`` (never truncated), so
    it may overlap its predecessor by more.
    """

    total_bands: int
    group_size: int
    stride: int
    groups: list

    @property
    def overlap(self) -> int:
        return self.group_size - self.stride


def plan_groups(total_bands: int, group_size: int, stride: int) -> BandGroupPlan:
    """Deterministically lay out overlapping groups over [0, total_bands)."""
    if total_bands < 1:
        raise ConfigError(f"total_bands must be positive, got {total_bands}")
    if not 1 <= group_size <= total_bands:
        raise ConfigError(
            f"group size must lie in [1, {total_bands}], got {group_size}"
        )
    if not 1 <= stride <= group_size:
        raise ConfigError(
            f"stride must lie in [1, {group_size}] (larger strides leave gaps), got {stride}"
        )
    last = total_bands - group_size
    starts = list(range(0, last + 1, stride))
    if starts[-1] != last:
        starts.append(last)  # right-align the final group
    groups = [(s, s + group_size) for s in starts]
    return BandGroupPlan(total_bands, group_size, stride, groups)


def merge_groups(preds, plan: BandGroupPlan) -> Tensor:
    """Merge per-group predictions: each band is the mean of all group
    predictions covering it.

    The mean is computed as an offset from the first covering prediction,
    so merging identical predictions reproduces them bit-exactly (a plain
    sum/divide does not: (v+v+v)/3 != v in IEEE arithmetic).
    """
    arrays = [p.data if isinstance(p, Tensor) else np.asarray(p, dtype=np.float64) for p in preds]
    if len(arrays) != len(plan.groups):
        raise DimensionError(
            f"got {len(arrays)} predictions for {len(plan.groups)} groups"
        )
    spatial = arrays[0].shape[:-1]
    for arr, (start, end) in zip(arrays, plan.groups):
        if arr.shape[:-1] != spatial or arr.shape[-1] != end - start:
            raise DimensionError(
                f"prediction shape {arr.shape} does not match group [{start},{end}) over {spatial}"
            )
    out = np.zeros(spatial + (plan.total_bands,), dtype=arrays[0].dtype)
    for band in range(plan.total_bands):
        covering = [
            (gi, band - start)
            for gi, (start, end) in enumerate(plan.groups)
            if start <= band < end
        ]
        gi0, off0 = covering[0]
        base = arrays[gi0][..., off0]
        if len(covering) == 1:
            out[..., band] = base
        else:
            delta = np.zeros_like(base)
            for gi, off in covering[1:]:
                delta += arrays[gi][..., off] - base
            out[..., band] = base + delta / len(covering)
    return Tensor(out)
