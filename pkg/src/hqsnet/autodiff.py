"""Small reverse-mode autodiff over float64 numpy tensors.

Operations record themselves on the innermost active :class:`Tape`::

    with Tape() as tape:
        out = relu(conv2d(x, w, b))
        loss = sum_squares(out)
    grads = backward(tape, loss)

Outside a ``with Tape()`` block the same functions just compute values,
which is what inference uses. Complex images travel as 2-channel tensors
(real plane, imaginary plane).
"""
from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import numerics
from .errors import DimensionError, GraphError, ShapeError

_ids = itertools.count()
_local = threading.local()


class Tensor:
    """A float64 array plus an identity used to key gradients."""

    __slots__ = ("data", "requires_grad", "id", "__weakref__")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.id = next(_ids)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        rg = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{rg})"


@dataclass
class _Record:
    name: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    vjp: Callable[[np.ndarray], tuple[np.ndarray | None, ...]]


@dataclass
class Tape:
    """Ordered log of primitive applications. Single owner, single thread."""

    records: list[_Record] = field(default_factory=list)

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        popped = _stack().pop()
        assert popped is self

    def __len__(self) -> int:
        return len(self.records)


def _stack() -> list[Tape]:
    if not hasattr(_local, "stack"):
        _local.stack = []
    return _local.stack


def _active() -> Tape | None:
    s = _stack()
    return s[-1] if s else None


def _emit(name: str, inputs: Sequence[Tensor], out_data: np.ndarray, vjp) -> Tensor:
    out = Tensor(out_data)
    tape = _active()
    if tape is not None:
        tape.records.append(_Record(name, tuple(inputs), out, vjp))
    return out


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# --- elementwise and reductions --------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add: {a.shape} vs {b.shape}")
    return _emit("add", (a, b), a.data + b.data, lambda g: (g, g))


def sub_const(x: Tensor, c: np.ndarray) -> Tensor:
    """``x - c`` for a constant array ``c``."""
    c = np.asarray(c, dtype=np.float64)
    if c.shape != x.shape:
        raise ShapeError(f"sub_const: {x.shape} vs {c.shape}")
    return _emit("sub_const", (x,), x.data - c, lambda g: (g,))


def mul_const(x: Tensor, c) -> Tensor:
    """Elementwise product with a constant scalar or same-shape array."""
    c = np.asarray(c, dtype=np.float64)
    if c.ndim and c.shape != x.shape:
        raise ShapeError(f"mul_const: {x.shape} vs {c.shape}")
    return _emit("mul_const", (x,), x.data * c, lambda g: (g * c,))


def relu(x: Tensor) -> Tensor:
    pos = x.data > 0
    return _emit("relu", (x,), np.where(pos, x.data, 0.0), lambda g: (g * pos,))


def total(x: Tensor) -> Tensor:
    """Sum of all entries as a scalar tensor."""
    shape = x.shape
    return _emit("sum", (x,), np.array(x.data.sum()), lambda g: (np.full(shape, float(g)),))


def sum_squares(x: Tensor) -> Tensor:
    d = x.data
    return _emit("sum_squares", (x,), np.array(np.sum(d * d)), lambda g: (2.0 * float(g) * d,))


def l1_norm(x: Tensor) -> Tensor:
    s = np.sign(x.data)
    return _emit("l1_norm", (x,), np.array(np.abs(x.data).sum()), lambda g: (float(g) * s,))


def add_scalars(terms: Sequence[Tensor], weights: Sequence[float] | None = None) -> Tensor:
    """Weighted sum of scalar tensors."""
    if weights is None:
        weights = [1.0] * len(terms)
    if len(weights) != len(terms):
        raise ShapeError("add_scalars: weights and terms differ in length")
    val = sum(float(w) * float(t.data) for w, t in zip(weights, terms))
    ws = [float(w) for w in weights]
    return _emit(
        "add_scalars",
        tuple(terms),
        np.array(val),
        lambda g: tuple(np.array(w * float(g)) for w in ws),
    )


def _check_planes(x: Tensor, name: str) -> None:
    if x.data.ndim != 3:
        raise DimensionError(f"{name}: expected C x H x W, got {x.shape}")


def tv_penalty(x: Tensor) -> Tensor:
    """Anisotropic TV summed over channels of a C x H x W tensor."""
    _check_planes(x, "tv_penalty")
    d = x.data
    val = sum(numerics.tv_value(p) for p in d)

    def vjp(g):
        return (float(g) * np.stack([numerics.tv_subgrad(p) for p in d]),)

    return _emit("tv_penalty", (x,), np.array(val), vjp)


def wavelet_l1(x: Tensor, levels: int = 2) -> Tensor:
    """l1 norm of Haar coefficients, summed over channels."""
    _check_planes(x, "wavelet_l1")
    coeffs = [numerics.dwt2(p, levels) for p in x.data]
    val = sum(np.abs(c.grid).sum() for c in coeffs)

    def vjp(g):
        back = [
            numerics.idwt2(numerics.WaveletCoeffs(levels, np.sign(c.grid))) for c in coeffs
        ]
        return (float(g) * np.stack(back),)

    return _emit("wavelet_l1", (x,), np.array(val), vjp)


# --- convolution -----------------------------------------------------------

def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    p = k // 2
    C, H, W = x.shape
    xp = np.pad(x, ((0, 0), (p, p), (p, p)))
    win = sliding_window_view(xp, (k, k), axis=(1, 2))  # C, H, W, k, k
    return win.transpose(0, 3, 4, 1, 2).reshape(C * k * k, H * W)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Zero-padded 'same' cross-correlation, stride 1, plus per-channel bias."""
    _check_planes(x, "conv2d")
    if weight.data.ndim != 4:
        raise ShapeError(f"conv2d: weight must be O x C x k x k, got {weight.shape}")
    O, C, k, k2 = weight.shape
    if k != k2 or k % 2 == 0:
        raise ShapeError(f"conv2d: kernel must be square and odd, got {k}x{k2}")
    if x.shape[0] != C:
        raise ShapeError(f"conv2d: input has {x.shape[0]} channels, weight expects {C}")
    if bias.shape != (O,):
        raise ShapeError(f"conv2d: bias shape {bias.shape}, expected ({O},)")
    _, H, W = x.shape
    cols = _im2col(x.data, k)
    wmat = weight.data.reshape(O, C * k * k)
    out = (wmat @ cols).reshape(O, H, W) + bias.data[:, None, None]

    def vjp(g):
        gm = g.reshape(O, H * W)
        gw = (gm @ cols.T).reshape(weight.shape)
        gb = gm.sum(axis=1)
        dcols = (wmat.T @ gm).reshape(C, k, k, H, W)
        p = k // 2
        gxp = np.zeros((C, H + 2 * p, W + 2 * p))
        for i in range(k):
            for j in range(k):
                gxp[:, i : i + H, j : j + W] += dcols[:, i, j]
        return gxp[:, p : p + H, p : p + W], gw, gb

    return _emit("conv2d", (x, weight, bias), out, vjp)


# --- Fourier-domain nodes --------------------------------------------------

def _to_complex(x: np.ndarray) -> np.ndarray:
    return x[0] + 1j * x[1]


def _to_planes(z: np.ndarray) -> np.ndarray:
    return np.stack([z.real, z.imag])


def _check_2ch(x: Tensor, name: str) -> None:
    if x.data.ndim != 3 or x.shape[0] != 2:
        raise ShapeError(f"{name}: expected 2 x H x W, got {x.shape}")


def fft_node(x: Tensor) -> Tensor:
    """Differentiable :func:`numerics.fft2c` on a (real, imag) plane pair."""
    _check_2ch(x, "fft_node")
    out = _to_planes(numerics.fft2c(_to_complex(x.data)))
    return _emit("fft", (x,), out, lambda g: (_to_planes(numerics.ifft2c(_to_complex(g))),))


def ifft_node(x: Tensor) -> Tensor:
    _check_2ch(x, "ifft_node")
    out = _to_planes(numerics.ifft2c(_to_complex(x.data)))
    return _emit("ifft", (x,), out, lambda g: (_to_planes(numerics.fft2c(_to_complex(g))),))


def dc_blend(zhat: Tensor, y: np.ndarray, mask: np.ndarray, lam: float) -> Tensor:
    """Data-consistency blend in k-space.

    Sampled bins become ``(y + lam * zhat) / (1 + lam)``; the rest pass
    through. ``y`` is a complex grid and ``mask`` a boolean grid, both held
    constant.
    """
    _check_2ch(zhat, "dc_blend")
    y = np.asarray(y)
    mask = np.asarray(mask, dtype=bool)
    if y.shape != zhat.shape[1:] or mask.shape != zhat.shape[1:]:
        raise ShapeError(f"dc_blend: zhat {zhat.shape}, y {y.shape}, mask {mask.shape}")
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    w = np.where(mask, lam / (1.0 + lam), 1.0)
    yp = np.where(mask, 1.0 / (1.0 + lam), 0.0) * _to_planes(y)
    out = w * zhat.data + yp
    return _emit("dc_blend", (zhat,), out, lambda g: (g * w,))


# --- backward ---------------------------------------------------------------

def backward(
    tape: Tape, root: Tensor, wrt: Iterable[Tensor] | None = None
) -> dict[Tensor, np.ndarray]:
    """Reverse-mode accumulation from scalar ``root``.

    Returns a gradient for every ``requires_grad`` tensor seen on the tape,
    plus any tensor listed in ``wrt`` (zeros when disconnected).
    """
    index = {rec.output.id: n for n, rec in enumerate(tape.records)}
    if root.id not in index:
        raise GraphError("root tensor was not produced on this tape")
    if root.data.size != 1:
        raise GraphError(f"root must be scalar, got shape {root.shape}")

    grads: dict[int, np.ndarray] = {root.id: np.ones_like(root.data)}
    leaves: dict[int, Tensor] = {}
    for rec in reversed(tape.records[: index[root.id] + 1]):
        g = grads.pop(rec.output.id, None)
        if g is None:
            continue
        for t, gi in zip(rec.inputs, rec.vjp(g)):
            if gi is None or not (t.requires_grad or t.id in index):
                continue
            if t.requires_grad:
                leaves[t.id] = t
            prev = grads.get(t.id)
            grads[t.id] = gi if prev is None else prev + gi

    out: dict[Tensor, np.ndarray] = {}
    for rec in tape.records:
        for t in rec.inputs:
            if t.requires_grad and t.id not in leaves:
                leaves[t.id] = t
    for tid, t in leaves.items():
        out[t] = np.asarray(grads.get(tid, np.zeros_like(t.data)), dtype=np.float64).reshape(t.shape)
    for t in wrt or ():
        if t not in out:
            out[t] = np.zeros_like(t.data)
    return out


# --- Adam ---------------------------------------------------------------------

@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_update(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam step. Inputs are left untouched."""
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise ShapeError("adam_update: params, grads and state differ in length")
    t = state.t + 1
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeError(f"adam_update: shape mismatch {p.shape} / {g.shape} / {m.shape}")
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        mhat = m / (1 - beta1**t)
        vhat = v / (1 - beta2**t)
        new_p.append(p - lr * mhat / (np.sqrt(vhat) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, AdamState(new_m, new_v, t)
