"""Reconstruction quality triad: MPSNR, MSSIM, and spectral angle (SAM).

All metrics compare two cubes of identical dimensions with values expected
in [0, max_val]. PSNR is capped at 100 dB so identical bands stay finite;
SSIM uses the standard 11x11 Gaussian window (sigma 1.5, K1=0.01, K2=0.03)
over valid window positions; SAM is averaged over pixels in radians and
reported in degrees, skipping (and counting) zero-norm spectra.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import HyperCube
from .errors import ContractError, DimensionError

PSNR_CAP_DB = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass
class MetricsReport:
    mpsnr: float
    mssim: float
    sam: float
    per_band_psnr: list = field(default_factory=list)
    per_band_ssim: list = field(default_factory=list)
    sam_skipped_pixels: int = 0


def _check_dims(ref: HyperCube, test: HyperCube):
    if ref.values.shape != test.values.shape:
        raise DimensionError(
            f"cube dimensions differ: {ref.values.shape} vs {test.values.shape}"
        )


def psnr_per_band(ref: HyperCube, test: HyperCube, max_val: float = 1.0):
    _check_dims(ref, test)
    diff = ref.values - test.values
    out = []
    for b in range(ref.bands):
        band_mse = float(np.mean(diff[:, :, b] ** 2))
        if band_mse == 0.0:
            out.append(PSNR_CAP_DB)
        else:
            out.append(min(10.0 * math.log10(max_val**2 / band_mse), PSNR_CAP_DB))
    return out


def mpsnr(ref: HyperCube, test: HyperCube, max_val: float = 1.0) -> float:
    """Mean over bands of per-band peak signal-to-noise ratio, in dB."""
    return float(np.mean(psnr_per_band(ref, test, max_val)))


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    offsets = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(offsets**2) / (2 * sigma**2))
    win = np.outer(g, g)
    return win / win.sum()


def _ssim_band(a: np.ndarray, b: np.ndarray, win: np.ndarray, c1: float, c2: float) -> float:
    size = win.shape[0]
    wa = np.lib.stride_tricks.sliding_window_view(a, (size, size))
    wb = np.lib.stride_tricks.sliding_window_view(b, (size, size))
    mu_a = np.einsum("hwij,ij->hw", wa, win)
    mu_b = np.einsum("hwij,ij->hw", wb, win)
    var_a = np.einsum("hwij,ij->hw", wa**2, win) - mu_a**2
    var_b = np.einsum("hwij,ij->hw", wb**2, win) - mu_b**2
    cov = np.einsum("hwij,ij->hw", wa * wb, win) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def ssim_per_band(ref: HyperCube, test: HyperCube, max_val: float = 1.0):
    _check_dims(ref, test)
    if ref.height < SSIM_WINDOW or ref.width < SSIM_WINDOW:
        raise ContractError(
            f"SSIM needs spatial dims >= {SSIM_WINDOW}, got {ref.height}x{ref.width}"
        )
    win = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    c1 = (SSIM_K1 * max_val) ** 2
    c2 = (SSIM_K2 * max_val) ** 2
    return [
        _ssim_band(ref.values[:, :, b], test.values[:, :, b], win, c1, c2)
        for b in range(ref.bands)
    ]


def mssim(ref: HyperCube, test: HyperCube, max_val: float = 1.0) -> float:
    """Mean over bands of the per-band structural similarity index."""
    return float(np.mean(ssim_per_band(ref, test, max_val)))


def sam(ref: HyperCube, test: HyperCube) -> float:
    """Mean per-pixel spectral angle in degrees (zero-norm pixels skipped)."""
    return _sam_with_count(ref, test)[0]


def _sam_with_count(ref: HyperCube, test: HyperCube):
    _check_dims(ref, test)
    u = ref.values.reshape(-1, ref.bands)
    v = test.values.reshape(-1, test.bands)
    nu = np.linalg.norm(u, axis=1)
    nv = np.linalg.norm(v, axis=1)
    valid = (nu > 0) & (nv > 0)
    skipped = int(np.count_nonzero(~valid))
    if skipped == u.shape[0]:
        raise ContractError("SAM undefined: every pixel spectrum has zero norm")
    cosine = np.clip(
        np.sum(u[valid] * v[valid], axis=1) / (nu[valid] * nv[valid]), -1.0, 1.0
    )
    angles = np.arccos(cosine)
    # identical spectra are exactly zero angle; arccos rounding would not be
    angles[np.all(u[valid] == v[valid], axis=1)] = 0.0
    return math.degrees(float(np.mean(angles))), skipped


def evaluate(ref: HyperCube, test: HyperCube, max_val: float = 1.0) -> MetricsReport:
    band_psnr = psnr_per_band(ref, test, max_val)
    band_ssim = ssim_per_band(ref, test, max_val)
    angle, skipped = _sam_with_count(ref, test)
    return MetricsReport(
        mpsnr=float(np.mean(band_psnr)),
        mssim=float(np.mean(band_ssim)),
        sam=angle,
        per_band_psnr=band_psnr,
        per_band_ssim=band_ssim,
        sam_skipped_pixels=skipped,
    )


def report_to_csv(report: MetricsReport) -> str:
    """UTF-8 CSV: header ``metric,value``, then mpsnr/mssim/sam and per-band
    PSNR rows."""
    lines = ["metric,value"]
    lines.append(f"mpsnr,{report.mpsnr:.10g}")
    lines.append(f"mssim,{report.mssim:.10g}")
    lines.append(f"sam,{report.sam:.10g}")
    for i, p in enumerate(report.per_band_psnr):
        lines.append(f"psnr_band_{i},{p:.10g}")
    return "\n".join(lines) + "\n"
