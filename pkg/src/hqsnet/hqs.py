"""Instance-based half-quadratic splitting for TV + wavelet regularized CS-MRI.

Each outer iteration runs a subgradient-descent approximation of the
regularizer's proximal step and then the closed-form k-space data
consistency update.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import numerics
from .errors import ShapeError
from .forward import Measurements, dc_update, zero_filled

WAVELET_LEVELS = 2


@dataclass
class HqsConfig:
    lam: float = 1.8
    alpha: float = 0.005
    beta: float = 0.002
    outer_max: int = 50
    outer_tol: float = 1e-5
    inner_max: int = 100
    inner_step: float = 1e-2
    inner_tol: float = 1e-4

    def __post_init__(self) -> None:
        if min(self.lam, self.alpha, self.beta) < 0:
            raise ValueError("lam, alpha and beta must be nonnegative")
        if min(self.outer_tol, self.inner_tol, self.inner_step) <= 0:
            raise ValueError("tolerances and step size must be positive")
        if self.outer_max < 1 or self.inner_max < 1:
            raise ValueError("iteration caps must be positive")


@dataclass
class SolveReport:
    objective_trace: list[float] = field(default_factory=list)
    converged: bool = False
    outer_iters: int = 0
    wall_time: float = 0.0


def _planes(x: np.ndarray):
    return (x.real, x.imag) if np.iscomplexobj(x) else (x,)


def regularizer(x: np.ndarray, alpha: float, beta: float) -> float:
    """``alpha * TV + beta * ||W x||_1`` summed over real and imaginary planes."""
    total = 0.0
    for p in _planes(np.asarray(x)):
        if alpha:
            total += alpha * numerics.tv_value(p)
        if beta:
            total += beta * float(np.abs(numerics.dwt2(p, WAVELET_LEVELS).grid).sum())
    return total


def data_term(x: np.ndarray, y: Measurements) -> float:
    x = np.asarray(x)
    if x.shape != y.shape:
        raise ShapeError(f"image {x.shape} vs measurements {y.shape}")
    r = np.where(y.mask.bits, numerics.fft2c(x.astype(np.complex128)), 0.0) - y.ksp
    return float(np.sum(r.real**2 + r.imag**2))


def objective(x: np.ndarray, y: Measurements, alpha: float, beta: float) -> float:
    """Data consistency plus TV/wavelet regularization."""
    return data_term(x, y) + regularizer(x, alpha, beta)


def _reg_and_subgrad(z: np.ndarray, alpha: float, beta: float) -> tuple[float, np.ndarray]:
    val = 0.0
    grads = []
    for p in (z.real, z.imag):
        g = np.zeros_like(p)
        if alpha:
            val += alpha * numerics.tv_value(p)
            g += alpha * numerics.tv_subgrad(p)
        if beta:
            c = numerics.dwt2(p, WAVELET_LEVELS)
            val += beta * float(np.abs(c.grid).sum())
            g += beta * numerics.idwt2(numerics.WaveletCoeffs(WAVELET_LEVELS, np.sign(c.grid)))
        grads.append(g)
    return val, grads[0] + 1j * grads[1]


def prox_objective(z: np.ndarray, x: np.ndarray, cfg: HqsConfig) -> float:
    d = z - x
    return regularizer(z, cfg.alpha, cfg.beta) + cfg.lam * float(np.sum(np.abs(d) ** 2))


def prox_step(x: np.ndarray, cfg: HqsConfig) -> np.ndarray:
    """Approximate ``argmin_z R(z) + lam ||z - x||^2`` by subgradient descent.

    Starts at ``x`` and returns the best iterate seen, so the result never
    scores worse than ``x`` itself.
    """
    x = np.asarray(x, dtype=np.complex128)
    z = x.copy()
    best, best_val = x, None
    for _ in range(cfg.inner_max):
        reg, g = _reg_and_subgrad(z, cfg.alpha, cfg.beta)
        val = reg + cfg.lam * float(np.sum(np.abs(z - x) ** 2))
        if best_val is None or val < best_val:
            best, best_val = z, val
        step = cfg.inner_step * (g + 2.0 * cfg.lam * (z - x))
        znew = z - step
        change = np.linalg.norm(step) / max(np.linalg.norm(z), 1e-30)
        z = znew
        if change < cfg.inner_tol:
            break
    if prox_objective(z, x, cfg) < best_val:
        best = z
    return best


def solve(y: Measurements, cfg: HqsConfig | None = None) -> tuple[np.ndarray, SolveReport]:
    """Run HQS from the zero-filled image; returns the best iterate found."""
    cfg = cfg or HqsConfig()
    t0 = time.perf_counter()
    x = zero_filled(y)
    f_prev = objective(x, y, cfg.alpha, cfg.beta)
    best, best_f = x, f_prev
    report = SolveReport(objective_trace=[best_f])
    # objective values below this are roundoff relative to the data
    floor = np.finfo(float).eps * float(np.sum(np.abs(y.ksp) ** 2))
    for k in range(1, cfg.outer_max + 1):
        z = prox_step(x, cfg)
        x = dc_update(z, y, cfg.lam)
        f = objective(x, y, cfg.alpha, cfg.beta)
        if f < best_f:
            best, best_f = x, f
        report.objective_trace.append(best_f)
        report.outer_iters = k
        if abs(f - f_prev) <= cfg.outer_tol * max(abs(f_prev), floor, 1e-300):
            report.converged = True
            break
        f_prev = f
    report.wall_time = time.perf_counter() - t0
    return best, report
