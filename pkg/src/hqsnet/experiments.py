"""Experiment configuration and the comparison / noise-sweep runners.

Configs are plain ``key = value`` text files; ``#`` starts a comment. Every
runner writes one CSV with the header in :data:`CSV_HEADER`.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from . import hqs, net
from .errors import HqsNetError, MissingCheckpointError
from .forward import Measurements, add_noise_image, add_noise_kspace, forward_model, zero_filled
from .metrics import relative_metrics
from .phantoms import DatasetManifest
from .sampling import Mask, read_mask

log = logging.getLogger(__name__)

CSV_HEADER = [
    "instance_id", "method", "domain", "sigma", "seed", "time_s", "loss",
    "psnr", "ssim", "neg_hfen", "rel_psnr", "rel_ssim", "rel_neg_hfen",
]
METHODS = ("zf", "hqs", "hqsnet", "cascade")
NOISE_DOMAINS = ("image", "kspace")


class ConfigError(HqsNetError, ValueError):
    """Bad experiment configuration (a usage error)."""


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(",", " ").split()]


def _names(text: str) -> list[str]:
    return [v for v in text.replace(",", " ").split()]


@dataclass
class ExperimentConfig:
    dataset: str = "data"
    output: str = "out"
    mask: str = ""  # defaults to <output>/mask.msk
    seed: int = 0
    mask_seed: int = -1  # -1: use seed
    count: int = 8
    height: int = 32
    width: int = 32
    R: float = 4.0
    p: int = 2
    solver: str = "hqs"
    methods: list[str] = field(default_factory=lambda: ["zf", "hqs", "hqsnet"])
    # classical solver
    lam: float = 1.8
    alpha: float = 0.005
    beta: float = 0.002
    outer_max: int = 50
    outer_tol: float = 1e-5
    inner_max: int = 100
    inner_step: float = 1e-2
    inner_tol: float = 1e-4
    # network
    K: int = 5
    layers: int = 3
    channels: int = 16
    kernel: int = 3
    residual: bool = True
    shared_weights: bool = False
    global_skip: bool = False
    lr: float = 1e-3
    batch: int = 4
    epochs: int = 10
    hqsnet_checkpoint: str = ""  # defaults to <output>/hqsnet.hqn
    cascade_checkpoint: str = ""  # defaults to <output>/cascade.hqn
    # noise
    noise_domain: str = "none"
    sigma: float = 0.0
    sigmas: list[float] = field(default_factory=lambda: [0.01, 0.025, 0.05, 0.075, 0.1])
    noise_seeds: int = 3
    timing: bool = True

    # text key -> field name where they differ
    ALIASES = {"lambda": "lam"}

    @classmethod
    def keys(cls) -> list[str]:
        names = [f.name for f in dataclasses.fields(cls)]
        inv = {v: k for k, v in cls.ALIASES.items()}
        return sorted(inv.get(n, n) for n in names)

    def set(self, key: str, value: str) -> None:
        key = key.strip()
        name = self.ALIASES.get(key, key)
        fields = {f.name: f for f in dataclasses.fields(self)}
        if name not in fields:
            raise ConfigError(f"unknown config key {key!r}")
        current = getattr(self, name)
        try:
            if name == "sigmas":
                parsed = _floats(value)
            elif name == "methods":
                parsed = _names(value)
            elif isinstance(current, bool):
                parsed = _bool(value)
            elif isinstance(current, int):
                parsed = int(value)
            elif isinstance(current, float):
                parsed = float(value)
            else:
                parsed = value.strip()
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from None
        setattr(self, name, parsed)

    def validate(self) -> None:
        if self.solver not in ("hqs", "hqsnet", "cascade"):
            raise ConfigError(f"solver must be hqs, hqsnet or cascade, not {self.solver!r}")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; choose from {METHODS}")
        if self.noise_domain not in ("none",) + NOISE_DOMAINS:
            raise ConfigError(f"noise_domain must be none, image or kspace")
        if self.sigma < 0 or any(s < 0 for s in self.sigmas):
            raise ConfigError("noise sigmas must be nonnegative")
        if self.noise_seeds < 1:
            raise ConfigError("noise_seeds must be positive")
        try:
            self.hqs_config()
            self.net_config()
            self.train_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def resolve(self, base: Path) -> None:
        """Make every path absolute (relative to ``base``) and fill defaults."""
        out = (base / self.output).resolve()
        self.output = str(out)
        self.dataset = str((base / self.dataset).resolve())
        self.mask = str((base / self.mask).resolve()) if self.mask else str(out / "mask.msk")
        for key, default in (("hqsnet_checkpoint", "hqsnet.hqn"), ("cascade_checkpoint", "cascade.hqn")):
            val = getattr(self, key)
            setattr(self, key, str((base / val).resolve()) if val else str(out / default))

    @property
    def master_mask_seed(self) -> int:
        return self.seed if self.mask_seed < 0 else self.mask_seed

    def hqs_config(self) -> hqs.HqsConfig:
        return hqs.HqsConfig(
            lam=self.lam, alpha=self.alpha, beta=self.beta, outer_max=self.outer_max,
            outer_tol=self.outer_tol, inner_max=self.inner_max, inner_step=self.inner_step,
            inner_tol=self.inner_tol,
        )

    def net_config(self) -> net.NetConfig:
        return net.NetConfig(
            K=self.K, layers_per_block=self.layers, channels=self.channels, kernel=self.kernel,
            lam=self.lam, residual=self.residual, shared_weights=self.shared_weights,
            global_skip=self.global_skip,
        )

    def train_config(self, mode: str | None = None) -> net.TrainConfig:
        if mode is None:
            mode = "supervised" if self.solver == "cascade" else "unsupervised"
        return net.TrainConfig(
            lr=self.lr, batch=self.batch, epochs=self.epochs, alpha=self.alpha,
            beta=self.beta, mode=mode, seed=self.seed,
        )

    def checkpoint_for(self, method: str) -> Path:
        return Path(self.hqsnet_checkpoint if method == "hqsnet" else self.cascade_checkpoint)


def parse_config_text(text: str, cfg: ExperimentConfig | None = None) -> ExperimentConfig:
    cfg = cfg or ExperimentConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        cfg.set(key, value)
    return cfg


def load_config(path: str | Path | None = None, overrides: Iterable[str] = ()) -> ExperimentConfig:
    """Read a config file (optional), apply ``key=value`` overrides, resolve paths."""
    cfg = ExperimentConfig()
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        parse_config_text(text, cfg)
        base = path.resolve().parent
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must be key=value, got {item!r}")
        key, value = item.split("=", 1)
        cfg.set(key, value)
    cfg.validate()
    cfg.resolve(base)
    return cfg


def format_config(cfg: ExperimentConfig) -> str:
    inv = {v: k for k, v in ExperimentConfig.ALIASES.items()}
    lines = []
    for f in dataclasses.fields(cfg):
        val = getattr(cfg, f.name)
        if isinstance(val, list):
            val = ", ".join(str(v) for v in val)
        lines.append(f"{inv.get(f.name, f.name)} = {val}")
    return "\n".join(lines) + "\n"


# --- data plumbing -------------------------------------------------------------

def load_mask(cfg: ExperimentConfig) -> Mask:
    path = Path(cfg.mask)
    if not path.is_file():
        raise HqsNetError(f"mask {path} not found; run genmask first")
    return read_mask(path)


def load_split(cfg: ExperimentConfig, split: str) -> tuple[list[str], np.ndarray]:
    return DatasetManifest.open(cfg.dataset).load_split(split)


def make_samples(truths: np.ndarray, mask: Mask) -> list[net.Sample]:
    return [net.Sample(forward_model(x, mask), x) for x in truths]


def load_network(cfg: ExperimentConfig, method: str) -> tuple[net.NetParams, net.NetConfig]:
    path = cfg.checkpoint_for(method)
    if not path.is_file():
        raise MissingCheckpointError(f"{method} checkpoint {path} not found; run train first")
    return net.load_checkpoint(path)


Reconstructor = Callable[[Measurements], np.ndarray]


def build_methods(cfg: ExperimentConfig, methods: Iterable[str]) -> dict[str, Reconstructor]:
    """Map each method name to a measurement -> complex image function."""
    out: dict[str, Reconstructor] = {}
    for m in methods:
        if m == "zf":
            out[m] = zero_filled
        elif m == "hqs":
            hcfg = cfg.hqs_config()
            out[m] = lambda y, hcfg=hcfg: hqs.solve(y, hcfg)[0]
        else:
            params, ncfg = load_network(cfg, m)
            out[m] = lambda y, p=params, c=ncfg: net.reconstruct(p, y, c)
    return out


def _timed(fn: Reconstructor, y: Measurements) -> tuple[np.ndarray, float]:
    t0 = time.perf_counter()
    x = fn(y)
    return x, time.perf_counter() - t0


@dataclass
class Row:
    instance_id: str
    method: str
    domain: str
    sigma: float
    seed: int
    time_s: float
    loss: float
    psnr: float
    ssim: float
    neg_hfen: float
    rel_psnr: float
    rel_ssim: float
    rel_neg_hfen: float

    def cells(self) -> list[str]:
        return [_fmt(getattr(self, k)) for k in CSV_HEADER]


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def write_csv(path: str | Path, rows: Iterable[Row]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(r.cells())
    path.write_text(buf.getvalue())
    return path


def read_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def score_row(
    iid: str, method: str, x: np.ndarray, dt: float, y: Measurements, truth: np.ndarray,
    cfg: ExperimentConfig, domain: str = "none", sigma: float = 0.0, seed: int | None = None,
) -> Row:
    zf = zero_filled(y)
    rec = relative_metrics(np.abs(x), np.abs(zf), truth)
    return Row(
        iid, method, domain, float(sigma), cfg.seed if seed is None else seed,
        dt if cfg.timing else 0.0, hqs.objective(x, y, cfg.alpha, cfg.beta),
        rec.psnr_db, rec.ssim, rec.neg_hfen, rec.rel_psnr, rec.rel_ssim, rec.rel_neg_hfen,
    )


_NUMERIC = CSV_HEADER[5:]


def summarize(rows: list[Row], instance_id: str, how: Callable) -> Row:
    """Aggregate rows sharing (method, domain, sigma, seed) into one row."""
    first = rows[0]
    vals = {k: float(how(np.array([getattr(r, k) for r in rows], dtype=float))) for k in _NUMERIC}
    return Row(instance_id, first.method, first.domain, first.sigma, first.seed, **vals)


def _mean(a: np.ndarray) -> float:
    return float(np.mean(a))


def _std(a: np.ndarray) -> float:
    # identical reconstructions give inf PSNR; their spread is reported over finite values
    fin = a[np.isfinite(a)]
    return float(np.std(fin)) if fin.size else float("nan")


def run_compare(cfg: ExperimentConfig, path: str | Path | None = None) -> tuple[Path, list[Row]]:
    """Per-test-instance timing, loss and metrics for each method, plus mean/std rows."""
    ids, truths = load_split(cfg, "test")
    if not ids:
        raise HqsNetError("dataset has no test split")
    mask = load_mask(cfg)
    fns = build_methods(cfg, cfg.methods)
    per_method: dict[str, list[Row]] = {m: [] for m in cfg.methods}
    for iid, truth in zip(ids, truths):
        y = forward_model(truth, mask)
        for m, fn in fns.items():
            x, dt = _timed(fn, y)
            per_method[m].append(score_row(iid, m, x, dt, y, truth, cfg))
        log.info("compare: instance %s done", iid)
    rows = [r for m in cfg.methods for r in per_method[m]]
    rows += [summarize(per_method[m], "mean", _mean) for m in cfg.methods]
    rows += [summarize(per_method[m], "std", _std) for m in cfg.methods]
    out = write_csv(path or Path(cfg.output) / "compare.csv", rows)
    return out, rows


def noise_seed(master: int, domain: str, rep: int, index: int) -> int:
    """Per-instance noise seed, independent of method and evaluation order."""
    ss = np.random.SeedSequence([master, NOISE_DOMAINS.index(domain), rep, index])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def noisy_measurements(
    truth: np.ndarray, mask: Mask, domain: str, sigma: float, seed: int
) -> Measurements:
    if domain == "image":
        return forward_model(add_noise_image(truth, sigma, seed), mask)
    if domain == "kspace":
        return add_noise_kspace(forward_model(truth, mask), sigma, seed)
    raise ValueError(f"unknown noise domain {domain!r}")


def run_noise_sweep(cfg: ExperimentConfig, path: str | Path | None = None) -> tuple[Path, list[Row]]:
    """Mean metrics over the test split for every (method, domain, sigma, noise seed)."""
    ids, truths = load_split(cfg, "test")
    if not ids:
        raise HqsNetError("dataset has no test split")
    mask = load_mask(cfg)
    fns = build_methods(cfg, cfg.methods)
    rows = []
    for domain in NOISE_DOMAINS:
        for sigma in cfg.sigmas:
            for rep in range(cfg.noise_seeds):
                per_method: dict[str, list[Row]] = {m: [] for m in cfg.methods}
                for n, (iid, truth) in enumerate(zip(ids, truths)):
                    y = noisy_measurements(truth, mask, domain, sigma, noise_seed(cfg.seed, domain, rep, n))
                    for m, fn in fns.items():
                        x, dt = _timed(fn, y)
                        per_method[m].append(score_row(iid, m, x, dt, y, truth, cfg, domain, sigma, rep))
                rows += [summarize(per_method[m], "mean", _mean) for m in cfg.methods]
                log.info("sweep: %s sigma=%g rep=%d done", domain, sigma, rep)
    out = write_csv(path or Path(cfg.output) / "noise_sweep.csv", rows)
    return out, rows
