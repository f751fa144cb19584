"""
Transforms and the building blocks of the regularizer
======================================================

Centered orthonormal FFT, a two-level Haar pyramid, anisotropic total
variation and the 15x15 Laplacian-of-Gaussian used by HFEN.
"""
import numpy as np

from hqsnet.numerics import dwt2, fft2c, idwt2, ifft2c, log_filter, tv_value
from hqsnet.phantoms import make_phantoms

img = make_phantoms(1, 64, 64, seed=0)[0]

# --- Fourier: energy is preserved and the DC bin sits in the middle ---
k = fft2c(img)
print("energy image / k-space:", np.linalg.norm(img), np.linalg.norm(k))
print("DC bin (32, 32):", k[32, 32].real, "= mean * 64 =", img.mean() * 64)
print("roundtrip error:", np.abs(ifft2c(k) - img).max())

# --- Haar: most of a piecewise-constant image lives in few coefficients ---
c = dwt2(img, levels=2)
mags = np.sort(np.abs(c.grid).ravel())[::-1]
share = np.cumsum(mags**2) / np.sum(mags**2)
print("coefficients holding 99% of energy:", int(np.searchsorted(share, 0.99)) + 1, "of", mags.size)
print("inverse error:", np.abs(idwt2(c) - img).max())

# --- TV and LoG ---
print("TV of phantom:", tv_value(img), " TV of constant:", tv_value(np.full((64, 64), 0.5)))
edges = log_filter(img)
print("LoG response range:", edges.min(), edges.max(), " (zero on flat regions)")
