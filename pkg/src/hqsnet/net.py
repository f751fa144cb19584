"""Unrolled HQS network: K blocks of (residual CNN regularizer, k-space DC layer).

The same architecture is trained two ways: without ground truth on the
classical data-consistency + TV + wavelet loss (HQS-Net), or supervised on an
l2 loss against fully-sampled images (the Cascade-Net baseline).
"""
from __future__ import annotations

import logging
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .errors import DataError, FormatError, ShapeError
from .forward import Measurements, zero_filled
from .hqs import WAVELET_LEVELS

log = logging.getLogger(__name__)


@dataclass
class NetConfig:
    # full scale: K=25, layers_per_block=5, channels=64
    K: int = 5
    layers_per_block: int = 3
    channels: int = 16
    kernel: int = 3
    lam: float = 1.8
    residual: bool = True
    shared_weights: bool = False
    global_skip: bool = False

    def __post_init__(self) -> None:
        if min(self.K, self.layers_per_block, self.channels, self.kernel) < 1:
            raise ValueError("K, layers_per_block, channels and kernel must be positive")
        if self.kernel % 2 == 0:
            raise ValueError("kernel size must be odd")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")

    @property
    def n_blocks(self) -> int:
        return 1 if self.shared_weights else self.K

    def layer_shapes(self) -> list[tuple[int, int]]:
        """(in, out) channels of each conv layer in one block."""
        chans = [2] + [self.channels] * (self.layers_per_block - 1) + [2]
        return list(zip(chans[:-1], chans[1:]))


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch: int = 4  # full scale: 8
    epochs: int = 10
    alpha: float = 0.005
    beta: float = 0.002
    mode: str = "unsupervised"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.lr < 0:
            raise ValueError("learning rate must be nonnegative")
        if self.batch < 1 or self.epochs < 1:
            raise ValueError("batch and epochs must be positive")
        if self.mode not in ("unsupervised", "supervised"):
            raise ValueError(f"unknown training mode {self.mode!r}")


Layer = tuple[np.ndarray, np.ndarray]


@dataclass
class NetParams:
    """Per-block conv (weight, bias) lists; a single block when weights are shared."""

    blocks: list[list[Layer]]

    def flat(self) -> list[np.ndarray]:
        return [a for block in self.blocks for layer in block for a in layer]

    @classmethod
    def from_flat(cls, arrays: Sequence[np.ndarray], like: "NetParams") -> "NetParams":
        it = iter(arrays)
        return cls([[(next(it), next(it)) for _ in block] for block in like.blocks])

    def copy(self) -> "NetParams":
        return NetParams([[(w.copy(), b.copy()) for w, b in block] for block in self.blocks])


def init_net(cfg: NetConfig, seed: int, zero_last: bool = True) -> NetParams:
    """He-uniform weights (bound sqrt(6 / fan_in)) and zero biases.

    With ``zero_last`` the final conv of every block starts at zero, so an
    untrained residual network reproduces repeated DC updates of the
    zero-filled image instead of injecting random structure.
    """
    rng = np.random.default_rng(seed)
    k = cfg.kernel
    shapes = cfg.layer_shapes()
    blocks = []
    for _ in range(cfg.n_blocks):
        layers = []
        for n, (cin, cout) in enumerate(shapes):
            bound = np.sqrt(6.0 / (cin * k * k))
            w = rng.uniform(-bound, bound, size=(cout, cin, k, k))
            if zero_last and n == len(shapes) - 1:
                w[...] = 0.0
            layers.append((w, np.zeros(cout)))
        blocks.append(layers)
    return NetParams(blocks)


def complex_to_tensor(z: np.ndarray) -> ad.Tensor:
    return ad.Tensor(np.stack([z.real, z.imag]))


def tensor_to_complex(t: ad.Tensor) -> np.ndarray:
    return t.data[0] + 1j * t.data[1]


def _cnn(x: ad.Tensor, layers) -> ad.Tensor:
    h = x
    last = len(layers) - 1
    for n, (w, b) in enumerate(layers):
        h = ad.conv2d(h, w, b)
        if n < last:
            h = ad.relu(h)
    return h


def _as_tensors(params, requires_grad: bool = False):
    if isinstance(params, NetParams):
        return [
            [(ad.Tensor(w, requires_grad), ad.Tensor(b, requires_grad)) for w, b in block]
            for block in params.blocks
        ]
    return params


def net_forward(params, y: Measurements, cfg: NetConfig, return_last_z: bool = False):
    """Unrolled reconstruction as a 2 x H x W (real, imag) tensor.

    ``params`` is either a :class:`NetParams` (treated as constants) or the
    nested tensor structure built by :func:`param_tensors` for training.
    """
    blocks = _as_tensors(params)
    if len(blocks) != cfg.n_blocks:
        raise ShapeError(f"params have {len(blocks)} blocks, config expects {cfg.n_blocks}")
    x1 = complex_to_tensor(zero_filled(y))
    x, z = x1, None
    for k in range(cfg.K):
        layers = blocks[0 if cfg.shared_weights else k]
        r = _cnn(x, layers)
        if cfg.global_skip:
            z = ad.add(x1, r)
        elif cfg.residual:
            z = ad.add(x, r)
        else:
            z = r
        x = ad.ifft_node(ad.dc_blend(ad.fft_node(z), y.ksp, y.mask.bits, cfg.lam))
    return (x, z) if return_last_z else x


def param_tensors(params: NetParams):
    return _as_tensors(params, requires_grad=True)


def reconstruct(params: NetParams, y: Measurements, cfg: NetConfig) -> np.ndarray:
    """Inference: complex image estimate, no tape."""
    return tensor_to_complex(net_forward(params, y, cfg))


def unsup_loss(recon: ad.Tensor, y: Measurements, alpha: float, beta: float) -> ad.Tensor:
    """Data consistency + alpha * TV + beta * wavelet-l1; never sees ground truth."""
    if recon.shape != (2,) + y.shape:
        raise ShapeError(f"recon {recon.shape} vs measurements {y.shape}")
    mask2 = np.broadcast_to(y.mask.bits, recon.shape).astype(np.float64)
    resid = ad.mul_const(ad.sub_const(ad.fft_node(recon), np.stack([y.ksp.real, y.ksp.imag])), mask2)
    terms = [ad.sum_squares(resid), ad.tv_penalty(recon), ad.wavelet_l1(recon, WAVELET_LEVELS)]
    return ad.add_scalars(terms, [1.0, alpha, beta])


def sup_loss(recon: ad.Tensor, x_true: np.ndarray) -> ad.Tensor:
    """Summed squared error against a real ground truth (imaginary target 0)."""
    x_true = np.asarray(x_true, dtype=np.float64)
    if recon.shape != (2,) + x_true.shape:
        raise ShapeError(f"recon {recon.shape} vs truth {x_true.shape}")
    return ad.sum_squares(ad.sub_const(recon, np.stack([x_true, np.zeros_like(x_true)])))


@dataclass
class Sample:
    """One training instance; ``truth`` is only read in supervised mode."""

    y: Measurements
    truth: np.ndarray | None = None


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    wall_time: list[float] = field(default_factory=list)
    best_epoch: int = -1


def _loss_fn(sample: Sample, recon: ad.Tensor, tcfg: TrainConfig) -> ad.Tensor:
    if tcfg.mode == "supervised":
        return sup_loss(recon, sample.truth)
    return unsup_loss(recon, sample.y, tcfg.alpha, tcfg.beta)


def _check_dataset(samples: Sequence[Sample], tcfg: TrainConfig, what: str) -> None:
    shapes = {s.y.shape for s in samples}
    if len(shapes) > 1:
        raise DataError(f"{what} set mixes grid shapes {sorted(shapes)}")
    if tcfg.mode == "supervised":
        for n, s in enumerate(samples):
            if s.truth is None:
                raise DataError(f"{what} sample {n} has no ground truth (supervised mode)")
            if np.shape(s.truth) != s.y.shape:
                raise DataError(f"{what} sample {n}: truth shape {np.shape(s.truth)} != {s.y.shape}")


def evaluate_loss(params: NetParams, samples: Sequence[Sample], ncfg: NetConfig, tcfg: TrainConfig) -> float:
    """Mean training-mode loss over ``samples`` without recording a tape."""
    losses = [_loss_fn(s, net_forward(params, s.y, ncfg), tcfg).item() for s in samples]
    return float(np.mean(losses))


def train(
    samples: Sequence[Sample],
    ncfg: NetConfig,
    tcfg: TrainConfig,
    val_samples: Sequence[Sample] | None = None,
) -> tuple[NetParams, TrainHistory]:
    """Mini-batch Adam; returns the params with the lowest validation loss.

    Without a validation set the selection falls back to the epoch's mean
    training loss.
    """
    if not samples:
        raise DataError("empty training set")
    _check_dataset(samples, tcfg, "training")
    if val_samples:
        _check_dataset(val_samples, tcfg, "validation")
    rng = np.random.default_rng(tcfg.seed)
    params = init_net(ncfg, tcfg.seed)
    state = ad.AdamState.zeros_like(params.flat())
    hist = TrainHistory()
    best, best_score = params.copy(), np.inf

    for epoch in range(tcfg.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(len(samples))
        epoch_losses = []
        for start in range(0, len(order), tcfg.batch):
            batch = [samples[i] for i in order[start : start + tcfg.batch]]
            tensors = param_tensors(params)
            flat_t = [t for block in tensors for layer in block for t in layer]
            acc = [np.zeros_like(t.data) for t in flat_t]
            for s in batch:
                with ad.Tape() as tape:
                    loss = _loss_fn(s, net_forward(tensors, s.y, ncfg), tcfg)
                g = ad.backward(tape, loss, wrt=flat_t)
                for a, t in zip(acc, flat_t):
                    a += g[t]
                epoch_losses.append(loss.item())
            grads = [a / len(batch) for a in acc]
            new_flat, state = ad.adam_update(params.flat(), grads, state, tcfg.lr)
            params = NetParams.from_flat(new_flat, params)

        train_loss = float(np.mean(epoch_losses))
        val_loss = evaluate_loss(params, val_samples, ncfg, tcfg) if val_samples else float("nan")
        hist.train_loss.append(train_loss)
        hist.val_loss.append(val_loss)
        hist.wall_time.append(time.perf_counter() - t0)
        score = val_loss if val_samples else train_loss
        if score < best_score:
            best, best_score, hist.best_epoch = params.copy(), score, epoch
        log.info("epoch %d train %.5f val %.5f", epoch, train_loss, val_loss)
    return best, hist


# --- HQN1 checkpoints -------------------------------------------------------

CKPT_MAGIC = b"HQN1"
CKPT_VERSION = 1
_CKPT_HEADER = struct.Struct("<4sHHHHHfBB")
_RESIDUAL_BIT, _GLOBAL_SKIP_BIT = 1, 2


def save_checkpoint(params: NetParams, cfg: NetConfig, path: str | Path) -> None:
    flags = (_RESIDUAL_BIT if cfg.residual else 0) | (_GLOBAL_SKIP_BIT if cfg.global_skip else 0)
    with open(path, "wb") as fh:
        fh.write(
            _CKPT_HEADER.pack(
                CKPT_MAGIC, CKPT_VERSION, cfg.K, cfg.layers_per_block, cfg.channels,
                cfg.kernel, cfg.lam, flags, int(cfg.shared_weights),
            )
        )
        for block in params.blocks:
            for w, b in block:
                fh.write(np.ascontiguousarray(w, dtype="<f4").tobytes())
                fh.write(np.ascontiguousarray(b, dtype="<f4").tobytes())


def load_checkpoint(path: str | Path) -> tuple[NetParams, NetConfig]:
    raw = Path(path).read_bytes()
    if len(raw) < _CKPT_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, K, layers, channels, kernel, lam, flags, shared = _CKPT_HEADER.unpack_from(raw)
    if magic != CKPT_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != CKPT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    try:
        cfg = NetConfig(
            # shortest decimal that round-trips the stored float32, e.g. 1.8
            K=K, layers_per_block=layers, channels=channels, kernel=kernel, lam=float(str(np.float32(lam))),
            residual=bool(flags & _RESIDUAL_BIT), shared_weights=bool(shared),
            global_skip=bool(flags & _GLOBAL_SKIP_BIT),
        )
    except ValueError as exc:
        raise FormatError(f"{path}: invalid header: {exc}") from None

    sizes = []
    for cin, cout in cfg.layer_shapes():
        sizes.append((cout, cin, kernel, kernel))
        sizes.append((cout,))
    per_block = sum(int(np.prod(s)) for s in sizes)
    body = raw[_CKPT_HEADER.size :]
    expected = 4 * per_block * cfg.n_blocks
    if len(body) != expected:
        raise FormatError(
            f"{path}: payload {len(body)} bytes, header implies {expected} ({cfg.n_blocks} blocks)"
        )
    flat = np.frombuffer(body, dtype="<f4").astype(np.float64)
    arrays, off = [], 0
    for _ in range(cfg.n_blocks):
        for s in sizes:
            n = int(np.prod(s))
            arrays.append(flat[off : off + n].reshape(s).copy())
            off += n
    it = iter(arrays)
    blocks = [[(next(it), next(it)) for _ in cfg.layer_shapes()] for _ in range(cfg.n_blocks)]
    return NetParams(blocks), cfg
