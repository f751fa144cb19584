"""PSNR, SSIM and HFEN on magnitude images, plus metrics relative to the
zero-filled baseline."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DegenerateError, DimensionError, ShapeError
from .numerics import LOG_SIZE, log_filter

PSNR_MAX = 1.0
SSIM_WIN = 11
SSIM_SIGMA = 1.5
SSIM_K1, SSIM_K2 = 0.01, 0.03


def _pair(x, ref) -> tuple[np.ndarray, np.ndarray]:
    x = np.abs(np.asarray(x)).astype(np.float64)
    ref = np.abs(np.asarray(ref)).astype(np.float64)
    if x.shape != ref.shape:
        raise ShapeError(f"{x.shape} vs {ref.shape}")
    return x, ref


def psnr(x, ref) -> float:
    """Peak SNR in dB with peak 1.0; ``inf`` for identical images."""
    x, ref = _pair(x, ref)
    mse = float(np.mean((x - ref) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(PSNR_MAX**2 / mse)


def _gauss_window() -> np.ndarray:
    r = (SSIM_WIN - 1) / 2
    g = np.exp(-(np.arange(SSIM_WIN) - r) ** 2 / (2 * SSIM_SIGMA**2))
    g /= g.sum()
    return np.outer(g, g)


def _local_mean(img: np.ndarray, win: np.ndarray) -> np.ndarray:
    return np.tensordot(sliding_window_view(img, win.shape), win, axes=([2, 3], [0, 1]))


def ssim(x, ref) -> float:
    """Mean SSIM over all fully-contained 11x11 Gaussian windows (data range 1)."""
    x, ref = _pair(x, ref)
    if x.ndim != 2 or min(x.shape) < SSIM_WIN:
        raise DimensionError(f"SSIM needs at least {SSIM_WIN}x{SSIM_WIN}, got {x.shape}")
    if np.array_equal(x, ref):
        return 1.0
    win = _gauss_window()
    c1, c2 = SSIM_K1**2, SSIM_K2**2
    mx, my = _local_mean(x, win), _local_mean(ref, win)
    vx = _local_mean(x * x, win) - mx * mx
    vy = _local_mean(ref * ref, win) - my * my
    cxy = _local_mean(x * ref, win) - mx * my
    num = (2 * mx * my + c1) * (2 * cxy + c2)
    den = (mx * mx + my * my + c1) * (vx + vy + c2)
    return float(np.mean(num / den))


def hfen(x, ref) -> float:
    """LoG-filtered error energy relative to the reference's LoG energy."""
    x, ref = _pair(x, ref)
    if x.ndim != 2 or min(x.shape) < LOG_SIZE:
        raise DimensionError(f"HFEN needs at least {LOG_SIZE}x{LOG_SIZE}, got {x.shape}")
    lr = log_filter(ref)
    denom = float(np.linalg.norm(lr))
    # a flat reference filters to roundoff, not exactly zero
    if denom <= 1e-10 * max(float(np.linalg.norm(ref)), np.finfo(float).tiny):
        raise DegenerateError("reference has no high-frequency content")
    return float(np.linalg.norm(log_filter(x) - lr)) / denom


@dataclass(frozen=True)
class MetricsRecord:
    psnr_db: float
    ssim: float
    neg_hfen: float
    rel_psnr: float
    rel_ssim: float
    rel_neg_hfen: float


def _diff(a: float, b: float) -> float:
    return 0.0 if a == b else a - b


def relative_metrics(recon, zero_fill, ref) -> MetricsRecord:
    """Metrics of ``recon`` and the same minus those of the zero-filled image."""
    p, s, h = psnr(recon, ref), ssim(recon, ref), -hfen(recon, ref)
    p0, s0, h0 = psnr(zero_fill, ref), ssim(zero_fill, ref), -hfen(zero_fill, ref)
    return MetricsRecord(p, s, h, _diff(p, p0), _diff(s, s0), _diff(h, h0))
