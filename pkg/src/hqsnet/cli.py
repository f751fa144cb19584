"""Command-line entry point: ``hqsnet <subcommand> --config PATH --set key=value``.

Exit status is 0 on success, 1 on usage errors and 2 on runtime failures.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import hqs, net
from .errors import HqsNetError
from .experiments import (
    ConfigError,
    ExperimentConfig,
    build_methods,
    load_config,
    load_mask,
    load_split,
    make_samples,
    run_compare,
    run_noise_sweep,
    score_row,
    write_csv,
)
from .forward import add_noise_image, add_noise_kspace, forward_model, save_measurements
from .numerics import read_grid, write_grid
from .phantoms import DatasetManifest, gen_phantoms
from .sampling import generate_mask, verify_mask, write_mask

log = logging.getLogger("hqsnet")

COMMANDS = (
    "genmask", "gendata", "simulate", "solve-hqs", "train",
    "reconstruct", "evaluate", "compare", "noise-sweep",
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hqsnet", description="CS-MRI reconstruction with HQS and HQS-Net.")
    p.add_argument("command", help="one of: " + ", ".join(COMMANDS))
    p.add_argument("--config", type=Path, help="key = value experiment config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key (repeatable)")
    p.add_argument("--seed", type=int, help="master seed for every random stream")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def cmd_genmask(cfg: ExperimentConfig) -> None:
    mask = generate_mask(cfg.height, cfg.width, cfg.R, cfg.p, cfg.master_mask_seed)
    Path(cfg.mask).parent.mkdir(parents=True, exist_ok=True)
    write_mask(cfg.mask, mask)
    man_path = Path(cfg.dataset) / DatasetManifest.FILENAME
    if man_path.is_file():
        man = DatasetManifest.open(cfg.dataset)
        man.mask_path = cfg.mask
        man.save()
    print(f"mask {cfg.mask}: {cfg.height}x{cfg.width} R={cfg.R:g} p={cfg.p} "
          f"fraction={mask.fraction:.4f}")


def cmd_gendata(cfg: ExperimentConfig) -> None:
    man = gen_phantoms(cfg.dataset, cfg.count, cfg.height, cfg.width, cfg.seed)
    sizes = {s: len(man.split(s)) for s in ("train", "val", "test")}
    print(f"dataset {cfg.dataset}: {sizes}")


def cmd_simulate(cfg: ExperimentConfig) -> None:
    man = DatasetManifest.open(cfg.dataset)
    mask = load_mask(cfg)
    outdir = Path(cfg.output) / "measurements"
    outdir.mkdir(parents=True, exist_ok=True)
    for n, e in enumerate(man.entries):
        x = man.load(e)
        seed = cfg.seed * 1_000_003 + n
        if cfg.noise_domain == "image":
            y = forward_model(add_noise_image(x, cfg.sigma, seed), mask)
        else:
            y = forward_model(x, mask)
            if cfg.noise_domain == "kspace":
                y = add_noise_kspace(y, cfg.sigma, seed)
        save_measurements(outdir / e.id, y)
    print(f"wrote {len(man.entries)} measurement sets to {outdir}")


def cmd_solve_hqs(cfg: ExperimentConfig) -> None:
    ids, truths = load_split(cfg, "test")
    mask = load_mask(cfg)
    hcfg = cfg.hqs_config()
    outdir = Path(cfg.output) / "recon" / "hqs"
    outdir.mkdir(parents=True, exist_ok=True)
    lines = [["instance_id", "outer_iters", "converged", "wall_time", "objective"]]
    for iid, x in zip(ids, truths):
        xs, rep = hqs.solve(forward_model(x, mask), hcfg)
        write_grid(outdir / f"{iid}.grd", xs)
        t = rep.wall_time if cfg.timing else 0.0
        lines.append([iid, rep.outer_iters, int(rep.converged), repr(t), repr(rep.objective_trace[-1])])
    with open(Path(cfg.output) / "hqs_reports.csv", "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(lines)
    print(f"solved {len(ids)} test instances into {outdir}")


def cmd_train(cfg: ExperimentConfig) -> None:
    if cfg.solver not in ("hqsnet", "cascade"):
        raise ConfigError("train needs solver = hqsnet or cascade")
    mask = load_mask(cfg)
    _, train_x = load_split(cfg, "train")
    _, val_x = load_split(cfg, "val")
    train_set = make_samples(train_x, mask)
    val_set = make_samples(val_x, mask) if len(val_x) else None
    ncfg, tcfg = cfg.net_config(), cfg.train_config()
    params, hist = net.train(train_set, ncfg, tcfg, val_set)
    ckpt = cfg.checkpoint_for(cfg.solver)
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    net.save_checkpoint(params, ncfg, ckpt)
    with open(Path(cfg.output) / f"train_{cfg.solver}.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss", "wall_time"])
        for e, (a, b, t) in enumerate(zip(hist.train_loss, hist.val_loss, hist.wall_time)):
            w.writerow([e, repr(a), repr(b), repr(t if cfg.timing else 0.0)])
    print(f"{cfg.solver} ({tcfg.mode}) checkpoint {ckpt}, best epoch {hist.best_epoch}")


def cmd_reconstruct(cfg: ExperimentConfig) -> None:
    ids, truths = load_split(cfg, "test")
    mask = load_mask(cfg)
    fn = build_methods(cfg, [cfg.solver])[cfg.solver]
    outdir = Path(cfg.output) / "recon" / cfg.solver
    outdir.mkdir(parents=True, exist_ok=True)
    for iid, x in zip(ids, truths):
        write_grid(outdir / f"{iid}.grd", fn(forward_model(x, mask)))
    print(f"reconstructed {len(ids)} test instances into {outdir}")


def cmd_evaluate(cfg: ExperimentConfig) -> int:
    mask = load_mask(cfg)
    rep = verify_mask(mask)
    print(f"mask fraction={rep.fraction:.4f} target={1 / mask.accel:.4f} "
          f"fraction_ok={rep.fraction_ok} separation_ok={rep.min_pairwise_ok} "
          f"center_ok={rep.center_ok}")
    status = 0 if rep.ok else 2
    recon_root = Path(cfg.output) / "recon"
    if not (Path(cfg.dataset) / DatasetManifest.FILENAME).is_file() or not recon_root.is_dir():
        return status
    ids, truths = load_split(cfg, "test")
    rows = []
    for method in sorted(p.name for p in recon_root.iterdir() if p.is_dir()):
        for iid, x in zip(ids, truths):
            f = recon_root / method / f"{iid}.grd"
            if f.is_file():
                rows.append(score_row(iid, method, read_grid(f), 0.0, forward_model(x, mask), x, cfg))
    if rows:
        out = write_csv(Path(cfg.output) / "evaluate.csv", rows)
        print(f"metrics for {len(rows)} reconstructions in {out}")
    return status


def cmd_compare(cfg: ExperimentConfig) -> None:
    out, rows = run_compare(cfg)
    for r in rows:
        if r.instance_id == "mean":
            print(f"{r.method:8s} time={r.time_s:.4f}s loss={r.loss:.5f} psnr={r.psnr:.2f} "
                  f"rel_psnr={r.rel_psnr:.2f}")
    print(f"wrote {out}")


def cmd_noise_sweep(cfg: ExperimentConfig) -> None:
    out, rows = run_noise_sweep(cfg)
    print(f"wrote {len(rows)} rows to {out}")


HANDLERS = {
    "genmask": cmd_genmask,
    "gendata": cmd_gendata,
    "simulate": cmd_simulate,
    "solve-hqs": cmd_solve_hqs,
    "train": cmd_train,
    "reconstruct": cmd_reconstruct,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "noise-sweep": cmd_noise_sweep,
}


def main(argv: list[str] | None = None) -> int:
    try:
        args = _parser().parse_args(argv)
        if args.command not in HANDLERS:
            raise UsageError(f"unknown command {args.command!r}; choose from {', '.join(COMMANDS)}")
        overrides = list(args.set)
        if args.seed is not None:
            overrides.append(f"seed={args.seed}")
        cfg = load_config(args.config, overrides)
    except (UsageError, ConfigError) as exc:
        print(f"hqsnet: error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        status = HANDLERS[args.command](cfg)
    except ConfigError as exc:
        print(f"hqsnet: error: {exc}", file=sys.stderr)
        return 1
    except (HqsNetError, OSError) as exc:
        print(f"hqsnet: {args.command} failed: {exc}", file=sys.stderr)
        return 2
    return status or 0


if __name__ == "__main__":
    sys.exit(main())
