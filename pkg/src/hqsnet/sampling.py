"""Variable-density Poisson-disk under-sampling masks.

Candidates are visited in a seeded random order; a candidate is accepted
when no accepted bin lies closer than the local radius
``r(d) = r_base / sqrt(max(density(d), DENSITY_FLOOR))``. A small disk
around the k-space center is always sampled. ``r_base`` is found by
bisection so that the sampled fraction lands within 10% of ``1 / R``.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from .errors import ConvergenceError, DomainError, FormatError

DENSITY_FLOOR = 1e-3
CENTER_FRACTION = 0.04
FRACTION_TOL = 0.1
MAX_BISECT = 40


@dataclass
class Mask:
    """Boolean sampling set plus the parameters that produced it."""

    bits: np.ndarray
    accel: float
    order: int
    seed: int
    r_base: float | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    @property
    def fraction(self) -> float:
        return float(self.bits.mean())

    def __eq__(self, other) -> bool:
        if not isinstance(other, Mask):
            return NotImplemented
        return (
            self.bits.shape == other.bits.shape
            and bool(np.array_equal(self.bits, other.bits))
            and float(np.float32(self.accel)) == float(np.float32(other.accel))
            and self.order == other.order
            and self.seed == other.seed
        )


def density(d: float, order: int) -> float:
    """Polynomial sampling density ``(1 - d) ** order``."""
    if not 0.0 <= d <= 1.0:
        raise DomainError(f"normalized distance {d} outside [0, 1]")
    return (1.0 - d) ** order


def normalized_distance(shape: tuple[int, int]) -> np.ndarray:
    """Distance of every bin from the center bin, 1 at the farthest corner."""
    h, w = shape
    i = np.arange(h)[:, None] - h // 2
    j = np.arange(w)[None, :] - w // 2
    dist = np.sqrt(i**2 + j**2)
    return dist / dist.max()


def _center_disk(shape: tuple[int, int]) -> np.ndarray:
    h, w = shape
    i = np.arange(h)[:, None] - h // 2
    j = np.arange(w)[None, :] - w // 2
    return (i**2 + j**2) <= (CENTER_FRACTION * min(h, w)) ** 2


def radius_map(shape: tuple[int, int], order: int, r_base: float) -> np.ndarray:
    """Local exclusion radius (in bins) at every k-space location."""
    dens = (1.0 - normalized_distance(shape)) ** order
    return r_base / np.sqrt(np.maximum(dens, DENSITY_FLOOR))


@numba.njit(cache=True)
def _throw_darts(rows, cols, radii, bits):
    h, w = bits.shape
    for n in range(rows.shape[0]):
        i = rows[n]
        j = cols[n]
        if bits[i, j]:
            continue
        r = radii[i, j]
        r2 = r * r
        span = int(math.ceil(r))
        ok = True
        for a in range(max(0, i - span), min(h, i + span + 1)):
            da = (a - i) * (a - i)
            if da >= r2:
                continue
            for b in range(max(0, j - span), min(w, j + span + 1)):
                if bits[a, b] and da + (b - j) * (b - j) < r2:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            bits[i, j] = True
    return bits


def _throw(shape, order, r_base, perm, forced) -> np.ndarray:
    h, w = shape
    bits = forced.copy()
    radii = radius_map(shape, order, r_base)
    return _throw_darts(perm // w, perm % w, radii, bits)


def generate_mask(h: int, w: int, accel: float, order: int, seed: int) -> Mask:
    """Poisson-disk mask whose sampled fraction is within 10% of ``1 / accel``."""
    if h < 16 or w < 16:
        raise DomainError(f"mask needs at least 16x16 bins, got {h}x{w}")
    if accel < 1:
        raise DomainError(f"acceleration must be >= 1, got {accel}")
    shape = (h, w)
    target = 1.0 / accel
    rng = np.random.default_rng(seed)
    perm = rng.permutation(h * w).astype(np.int64)
    forced = _center_disk(shape)

    # log-space bisection: small r_base samples everything, large samples almost nothing
    lo, hi = math.log(1e-2), math.log(float(max(h, w)))
    for _ in range(MAX_BISECT):
        mid = 0.5 * (lo + hi)
        bits = _throw(shape, order, math.exp(mid), perm, forced)
        frac = bits.mean()
        if abs(frac - target) <= FRACTION_TOL * target:
            return Mask(bits, float(accel), int(order), int(seed), math.exp(mid))
        if frac > target:
            lo = mid
        else:
            hi = mid
    raise ConvergenceError(
        f"r_base bisection did not reach fraction {target:.4f} in {MAX_BISECT} steps"
    )


@dataclass(frozen=True)
class MaskReport:
    fraction: float
    fraction_ok: bool
    min_pairwise_ok: bool
    center_ok: bool

    @property
    def ok(self) -> bool:
        return self.fraction_ok and self.min_pairwise_ok and self.center_ok


@numba.njit(cache=True)
def _separation_ok(bits, radii, exempt):
    h, w = bits.shape
    for i in range(h):
        for j in range(w):
            if not bits[i, j] or exempt[i, j]:
                continue
            r = radii[i, j]
            span = int(math.ceil(r))
            for a in range(max(0, i - span), min(h, i + span + 1)):
                for b in range(max(0, j - span), min(w, j + span + 1)):
                    if (a == i and b == j) or not bits[a, b] or exempt[a, b]:
                        continue
                    d2 = (a - i) * (a - i) + (b - j) * (b - j)
                    lim = min(r, radii[a, b])
                    if d2 < lim * lim * (1.0 - 1e-12):
                        return False
    return True


def verify_mask(mask: Mask, r_base: float | None = None) -> MaskReport:
    """Recheck fraction, Poisson-disk separation and center coverage.

    Separation is checked pairwise outside the forced center disk: two
    samples must be at least ``min(r(p), r(q))`` apart, since the later of
    the two was tested against its own radius. When ``r_base`` is not known
    it is recovered by regenerating the mask from its stored parameters.
    """
    bits = np.asarray(mask.bits, dtype=bool)
    h, w = bits.shape
    frac = float(bits.mean())
    target = 1.0 / mask.accel
    if r_base is None:
        r_base = mask.r_base
    if r_base is None:
        r_base = generate_mask(h, w, mask.accel, mask.order, mask.seed).r_base
    radii = radius_map((h, w), mask.order, r_base)
    sep_ok = bool(_separation_ok(bits, radii, _center_disk((h, w))))
    return MaskReport(
        fraction=frac,
        fraction_ok=abs(frac - target) <= FRACTION_TOL * target + 1e-12,
        min_pairwise_ok=sep_ok,
        center_ok=bool(bits[h // 2, w // 2]),
    )


def radial_profile(mask: Mask | np.ndarray, nbins: int = 8) -> np.ndarray:
    """Sampling rate in ``nbins`` equal-width annuli of normalized distance."""
    bits = mask.bits if isinstance(mask, Mask) else np.asarray(mask, dtype=bool)
    d = normalized_distance(bits.shape)
    idx = np.minimum((d * nbins).astype(int), nbins - 1)
    counts = np.bincount(idx.ravel(), minlength=nbins)
    hits = np.bincount(idx.ravel(), weights=bits.ravel().astype(float), minlength=nbins)
    return hits / np.maximum(counts, 1)


# --- MSK1 persistence -------------------------------------------------------

MSK_MAGIC = b"MSK1"
_MSK_HEADER = struct.Struct("<4sIIfBQ")


@dataclass(frozen=True)
class MaskHeader:
    height: int
    width: int
    accel: float
    order: int
    seed: int


def write_mask(path: str | Path, mask: Mask) -> None:
    h, w = mask.shape
    with open(path, "wb") as fh:
        fh.write(_MSK_HEADER.pack(MSK_MAGIC, h, w, mask.accel, mask.order, mask.seed))
        fh.write(np.packbits(np.asarray(mask.bits, dtype=bool).ravel()).tobytes())


def read_mask_header(path: str | Path) -> MaskHeader:
    """Parse only the fixed-size header."""
    with open(path, "rb") as fh:
        raw = fh.read(_MSK_HEADER.size)
    return _parse_header(raw, path)


def _parse_header(raw: bytes, path) -> MaskHeader:
    if len(raw) < _MSK_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, h, w, accel, order, seed = _MSK_HEADER.unpack_from(raw)
    if magic != MSK_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if h == 0 or w == 0:
        raise FormatError(f"{path}: empty shape {h}x{w}")
    return MaskHeader(h, w, float(accel), order, seed)


def read_mask(path: str | Path) -> Mask:
    raw = Path(path).read_bytes()
    hdr = _parse_header(raw, path)
    n = hdr.height * hdr.width
    body = raw[_MSK_HEADER.size :]
    if len(body) != (n + 7) // 8:
        raise FormatError(f"{path}: payload has {len(body)} bytes, expected {(n + 7) // 8}")
    bits = np.unpackbits(np.frombuffer(body, dtype=np.uint8), count=n).astype(bool)
    return Mask(bits.reshape(hdr.height, hdr.width), hdr.accel, hdr.order, hdr.seed)
