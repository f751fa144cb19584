"""Dense 2-D grid transforms: centered orthonormal DFT, Haar wavelets,
anisotropic total variation and the Laplacian-of-Gaussian filter.

Grids are plain numpy arrays: real images are ``float64`` arrays of shape
``(H, W)`` and k-space / complex images are ``complex128`` arrays of the same
shape. The GRD1 reader/writer at the bottom of the module persists either
kind as float32.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import DimensionError, FormatError

LOG_SIZE = 15
LOG_SIGMA = 1.5


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def _check_fft_shape(shape: tuple[int, ...]) -> None:
    if len(shape) != 2:
        raise DimensionError(f"expected a 2-D grid, got shape {shape}")
    if not (_is_pow2(shape[0]) and _is_pow2(shape[1])):
        raise DimensionError(f"FFT grid sides must be powers of two, got {shape}")


def fft2c(img: np.ndarray) -> np.ndarray:
    """Centered orthonormal 2-D DFT (zero frequency at ``(H//2, W//2)``)."""
    img = np.asarray(img)
    _check_fft_shape(img.shape)
    return np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(img), norm="ortho"))


def ifft2c(ksp: np.ndarray) -> np.ndarray:
    """Inverse of :func:`fft2c`; also its adjoint."""
    ksp = np.asarray(ksp)
    _check_fft_shape(ksp.shape)
    return np.fft.fftshift(np.fft.ifft2(np.fft.ifftshift(ksp), norm="ortho"))


@dataclass(frozen=True)
class WaveletCoeffs:
    """Multi-level Haar coefficients in nested-quadrant layout.

    The deepest approximation band sits in the top-left
    ``H / 2**levels x W / 2**levels`` corner of ``grid``.
    """

    levels: int
    grid: np.ndarray


_S = 1.0 / np.sqrt(2.0)


def _check_wavelet_shape(shape: tuple[int, ...], levels: int) -> None:
    if levels < 1:
        raise DimensionError("levels must be positive")
    if len(shape) != 2:
        raise DimensionError(f"expected a 2-D grid, got shape {shape}")
    step = 2**levels
    if shape[0] % step or shape[1] % step:
        raise DimensionError(f"shape {shape} not divisible by 2**{levels}")


def _haar_rows(a: np.ndarray) -> np.ndarray:
    return np.concatenate([(a[0::2] + a[1::2]) * _S, (a[0::2] - a[1::2]) * _S], axis=0)


def _ihaar_rows(c: np.ndarray) -> np.ndarray:
    n = c.shape[0] // 2
    lo, hi = c[:n], c[n:]
    out = np.empty_like(c)
    out[0::2] = (lo + hi) * _S
    out[1::2] = (lo - hi) * _S
    return out


def dwt2(img: np.ndarray, levels: int = 2) -> WaveletCoeffs:
    """Orthonormal multi-level 2-D Haar analysis."""
    img = np.asarray(img, dtype=np.float64)
    _check_wavelet_shape(img.shape, levels)
    out = img.copy()
    h, w = img.shape
    for _ in range(levels):
        block = out[:h, :w]
        block = _haar_rows(block)
        block = _haar_rows(block.T).T
        out[:h, :w] = block
        h //= 2
        w //= 2
    return WaveletCoeffs(levels, out)


def idwt2(coeffs: WaveletCoeffs) -> np.ndarray:
    """Inverse (and adjoint) of :func:`dwt2`."""
    out = np.array(coeffs.grid, dtype=np.float64, copy=True)
    _check_wavelet_shape(out.shape, coeffs.levels)
    H, W = out.shape
    for lev in reversed(range(coeffs.levels)):
        h, w = H >> lev, W >> lev
        block = out[:h, :w]
        block = _ihaar_rows(block.T).T
        block = _ihaar_rows(block)
        out[:h, :w] = block
    return out


def tv_value(img: np.ndarray) -> float:
    """Anisotropic total variation with no wrap-around differences."""
    img = np.asarray(img, dtype=np.float64)
    return float(np.abs(np.diff(img, axis=0)).sum() + np.abs(np.diff(img, axis=1)).sum())


def tv_subgrad(img: np.ndarray) -> np.ndarray:
    """A subgradient of :func:`tv_value`, taking ``sign(0) = 0``."""
    img = np.asarray(img, dtype=np.float64)
    g = np.zeros_like(img)
    sv = np.sign(np.diff(img, axis=0))
    sh = np.sign(np.diff(img, axis=1))
    g[1:, :] += sv
    g[:-1, :] -= sv
    g[:, 1:] += sh
    g[:, :-1] -= sh
    return g


@lru_cache(maxsize=None)
def _log_kernel(size: int, sigma: float) -> np.ndarray:
    r = (size - 1) / 2.0
    y, x = np.mgrid[-r : r + 1, -r : r + 1]
    rr = x**2 + y**2
    g = np.exp(-rr / (2.0 * sigma**2))
    g /= g.sum()
    k = g * (rr - 2.0 * sigma**2) / sigma**4
    k -= k.mean()
    k.setflags(write=False)
    return k


def log_kernel(size: int = LOG_SIZE, sigma: float = LOG_SIGMA) -> np.ndarray:
    """Zero-sum Laplacian-of-Gaussian kernel (a fresh copy)."""
    return _log_kernel(size, float(sigma)).copy()


def log_filter(img: np.ndarray) -> np.ndarray:
    """Filter with the 15x15, sigma=1.5 LoG kernel using symmetric padding."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] < LOG_SIZE or img.shape[1] < LOG_SIZE:
        raise DimensionError(f"LoG filter needs at least {LOG_SIZE}x{LOG_SIZE}, got {img.shape}")
    # scipy's "reflect" mode is the half-sample symmetric extension (d c b a | a b c d)
    return ndimage.correlate(img, _log_kernel(LOG_SIZE, LOG_SIGMA), mode="reflect")


# --- GRD1 persistence -------------------------------------------------------

GRD_MAGIC = b"GRD1"
_GRD_HEADER = struct.Struct("<4sIIB")


def write_grid(path: str | Path, grid: np.ndarray) -> None:
    """Write a real or complex 2-D grid as GRD1 (float32 payload)."""
    grid = np.asarray(grid)
    if grid.ndim != 2:
        raise DimensionError(f"expected a 2-D grid, got shape {grid.shape}")
    if np.iscomplexobj(grid):
        tag, payload = 1, grid.astype("<c8")
    else:
        tag, payload = 0, grid.astype("<f4")
    with open(path, "wb") as fh:
        fh.write(_GRD_HEADER.pack(GRD_MAGIC, grid.shape[0], grid.shape[1], tag))
        fh.write(np.ascontiguousarray(payload).tobytes())


def read_grid(path: str | Path) -> np.ndarray:
    """Read a GRD1 file into a float64 or complex128 array."""
    raw = Path(path).read_bytes()
    if len(raw) < _GRD_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, h, w, tag = _GRD_HEADER.unpack_from(raw)
    if magic != GRD_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if tag not in (0, 1) or h == 0 or w == 0:
        raise FormatError(f"{path}: bad header (tag={tag}, shape={h}x{w})")
    dtype = np.dtype("<c8") if tag == 1 else np.dtype("<f4")
    body = raw[_GRD_HEADER.size :]
    if len(body) != h * w * dtype.itemsize:
        raise FormatError(f"{path}: payload size {len(body)} does not match {h}x{w}")
    arr = np.frombuffer(body, dtype=dtype).reshape(h, w)
    return arr.astype(np.complex128 if tag == 1 else np.float64)
