"""Single-coil Cartesian acquisition model and the k-space DC update."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ShapeError
from .numerics import fft2c, ifft2c, read_grid, write_grid
from .sampling import Mask, read_mask, write_mask


@dataclass
class Measurements:
    """Under-sampled k-space; ``ksp`` is zero wherever the mask is off."""

    ksp: np.ndarray
    mask: Mask

    def __post_init__(self) -> None:
        self.ksp = np.asarray(self.ksp, dtype=np.complex128)
        if self.ksp.shape != self.mask.shape:
            raise ShapeError(f"k-space {self.ksp.shape} vs mask {self.mask.shape}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.ksp.shape


def _check(shape, mask: Mask) -> None:
    if tuple(shape) != mask.shape:
        raise ShapeError(f"grid {tuple(shape)} vs mask {mask.shape}")


def forward_model(x: np.ndarray, mask: Mask) -> Measurements:
    """``y = M * F x`` with off-mask bins exactly zero."""
    x = np.asarray(x)
    _check(x.shape, mask)
    ksp = np.where(mask.bits, fft2c(x.astype(np.complex128)), 0.0)
    return Measurements(ksp, mask)


def zero_filled(y: Measurements) -> np.ndarray:
    return ifft2c(y.ksp)


def dc_update(z: np.ndarray, y: Measurements, lam: float) -> np.ndarray:
    """Exact minimizer of ``||F_mask x - y||^2 + lam ||z - x||^2`` over x."""
    z = np.asarray(z)
    _check(z.shape, y.mask)
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    zhat = fft2c(z.astype(np.complex128))
    xhat = np.where(y.mask.bits, (y.ksp + lam * zhat) / (1.0 + lam), zhat)
    return ifft2c(xhat)


def add_noise_image(x: np.ndarray, sigma: float, seed: int) -> np.ndarray:
    """Additive white Gaussian noise in the image domain."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    x = np.asarray(x, dtype=np.float64)
    if sigma == 0:
        return x.copy()
    return x + np.random.default_rng(seed).normal(0.0, sigma, size=x.shape)


def add_noise_kspace(y: Measurements, sigma: float, seed: int) -> Measurements:
    """Independent N(0, sigma^2) on real and imaginary parts of sampled bins."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0:
        return Measurements(y.ksp.copy(), y.mask)
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, sigma, size=y.shape) + 1j * rng.normal(0.0, sigma, size=y.shape)
    return Measurements(np.where(y.mask.bits, y.ksp + noise, 0.0), y.mask)


def save_measurements(stem: str | Path, y: Measurements) -> tuple[Path, Path]:
    """Write ``<stem>.grd`` (complex k-space) and ``<stem>.msk`` side by side."""
    stem = Path(stem)
    kpath, mpath = stem.with_suffix(".grd"), stem.with_suffix(".msk")
    write_grid(kpath, y.ksp)
    write_mask(mpath, y.mask)
    return kpath, mpath


def load_measurements(stem: str | Path) -> Measurements:
    stem = Path(stem)
    return Measurements(read_grid(stem.with_suffix(".grd")), read_mask(stem.with_suffix(".msk")))
