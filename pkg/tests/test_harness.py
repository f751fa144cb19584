import json
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from hqsnet import hqs
from hqsnet.cli import main
from hqsnet.errors import DataError, DimensionError, MissingCheckpointError
from hqsnet.experiments import (
    CSV_HEADER,
    ConfigError,
    ExperimentConfig,
    build_methods,
    format_config,
    load_config,
    load_mask,
    noise_seed,
    parse_config_text,
    read_csv,
    run_compare,
    run_noise_sweep,
)
from hqsnet.forward import forward_model
from hqsnet.phantoms import DatasetManifest, Entry, gen_phantoms, make_phantoms, split_counts

SMALL = """\
dataset = data
output = out
count = 10
height = 16
width = 16
K = 2
channels = 4
epochs = 1
batch = 2
outer_max = 5
inner_max = 20
methods = zf, hqs, hqsnet, cascade
sigmas = 0, 0.05, 0.2
"""


def cli(cfg_path, *args):
    return main([args[0], "--config", str(cfg_path), *args[1:]])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("ws")
    cfg = root / "exp.cfg"
    cfg.write_text(SMALL)
    assert cli(cfg, "gendata") == 0
    assert cli(cfg, "genmask") == 0
    assert cli(cfg, "train", "--set", "solver=hqsnet") == 0
    assert cli(cfg, "train", "--set", "solver=cascade") == 0
    return root, cfg


class TestPhantoms:
    def test_range_and_determinism(self):
        a = make_phantoms(5, 32, 32, 3)
        assert a.min() >= 0 and a.max() <= 1
        assert a.tobytes() == make_phantoms(5, 32, 32, 3).tobytes()

    def test_mean_intensity(self):
        assert 0.05 <= make_phantoms(100, 32, 32, 0).mean() <= 0.6

    def test_not_blank(self):
        assert all(p.std() > 0 for p in make_phantoms(10, 32, 32, 1))

    @pytest.mark.parametrize("count,expected", [(100, (70, 10, 20)), (10, (7, 1, 2)), (8, (6, 1, 1)), (1, (1, 0, 0))])
    def test_split_counts(self, count, expected):
        assert split_counts(count) == expected

    def test_manifest(self, tmp_path):
        man = gen_phantoms(tmp_path, 10, 16, 16, 4)
        again = DatasetManifest.open(tmp_path)
        assert again.entries == man.entries and again.seed == 4
        ids, xs = again.load_split("test")
        assert ids == ["00008", "00009"] and xs.shape == (2, 16, 16)
        np.testing.assert_array_equal(xs, make_phantoms(10, 16, 16, 4)[8:].astype(np.float32))
        splits = [set(e.id for e in again.split(s)) for s in ("train", "val", "test")]
        assert not (splits[0] & splits[1]) and not (splits[1] & splits[2])

    def test_power_of_two(self, tmp_path):
        with pytest.raises(DimensionError):
            gen_phantoms(tmp_path, 2, 24, 16, 0)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DataError):
            DatasetManifest.open(tmp_path)

    @pytest.mark.parametrize("mutate", ["dup", "missing", "split", "garbage"])
    def test_invalid_manifest(self, tmp_path, mutate):
        gen_phantoms(tmp_path, 3, 16, 16, 0)
        path = tmp_path / "manifest.json"
        doc = json.loads(path.read_text())
        if mutate == "dup":
            doc["entries"][1]["id"] = doc["entries"][0]["id"]
        elif mutate == "missing":
            doc["entries"][0]["path"] = "truth/nope.grd"
        elif mutate == "split":
            doc["entries"][0]["split"] = "holdout"
        else:
            doc = {"entries": [{"id": 1}]}
        path.write_text(json.dumps(doc))
        with pytest.raises(DataError):
            DatasetManifest.open(tmp_path)


class TestConfig:
    def test_parse(self):
        cfg = parse_config_text("lambda = 2.5  # comment\nresidual = off\nsigmas = 0.1, 0.2\n\nmethods = zf hqs\n")
        assert cfg.lam == 2.5 and cfg.residual is False and cfg.sigmas == [0.1, 0.2] and cfg.methods == ["zf", "hqs"]

    @pytest.mark.parametrize("text", ["bogus = 1", "K = five", "residual = maybe", "just words"])
    def test_rejects(self, text):
        with pytest.raises(ConfigError):
            parse_config_text(text)

    @pytest.mark.parametrize("override", ["solver=admm", "methods=zf,magic", "noise_domain=both", "sigma=-1",
                                          "kernel=4", "lr=-1", "noise_seeds=0", "novalue"])
    def test_validate(self, override):
        with pytest.raises(ConfigError):
            load_config(None, [override])

    def test_format_roundtrip(self):
        cfg = parse_config_text("K = 7\nlambda = 0.5\nsigmas = 0.1\nglobal_skip = true\n")
        assert parse_config_text(format_config(cfg)) == cfg

    def test_keys_use_text_names(self):
        keys = ExperimentConfig.keys()
        assert "lambda" in keys and "lam" not in keys

    def test_paths_resolve_against_config(self, tmp_path):
        (tmp_path / "c.cfg").write_text("dataset = d\noutput = o\n")
        cfg = load_config(tmp_path / "c.cfg", ["seed=9"])
        assert cfg.dataset == str(tmp_path / "d") and cfg.mask == str(tmp_path / "o" / "mask.msk")
        assert cfg.hqsnet_checkpoint == str(tmp_path / "o" / "hqsnet.hqn")
        assert cfg.seed == 9 and cfg.master_mask_seed == 9

    def test_unreadable_config(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.cfg")

    def test_train_mode_follows_solver(self):
        assert load_config(None, ["solver=cascade"]).train_config().mode == "supervised"
        assert load_config(None, ["solver=hqsnet"]).train_config().mode == "unsupervised"


class TestRunners:
    def test_compare(self, workspace):
        root, cfg_path = workspace
        cfg = load_config(cfg_path)
        out, rows = run_compare(cfg, root / "cmp.csv")
        assert out.read_text().splitlines()[0] == ",".join(CSV_HEADER)
        per = [r for r in rows if r.instance_id not in ("mean", "std")]
        assert len(per) == 2 * 4 and len(rows) == 8 + 2 * 4
        assert all(r.rel_psnr == 0 and r.rel_ssim == 0 for r in per if r.method == "zf")
        mask = load_mask(cfg)
        ids, truths = DatasetManifest.open(cfg.dataset).load_split("test")
        for iid, x in zip(ids, truths):
            y = forward_model(x, mask)
            xs, _ = hqs.solve(y, cfg.hqs_config())
            row = next(r for r in per if r.method == "hqs" and r.instance_id == iid)
            assert abs(row.loss - hqs.objective(xs, y, cfg.alpha, cfg.beta)) < 1e-10
            net_row = next(r for r in per if r.method == "hqsnet" and r.instance_id == iid)
            assert net_row.time_s < row.time_s

    def test_compare_means(self, workspace):
        _, cfg_path = workspace
        _, rows = run_compare(load_config(cfg_path))
        for m in ("zf", "hqs"):
            vals = [r.psnr for r in rows if r.method == m and r.instance_id not in ("mean", "std")]
            mean = next(r for r in rows if r.method == m and r.instance_id == "mean")
            std = next(r for r in rows if r.method == m and r.instance_id == "std")
            assert mean.psnr == pytest.approx(np.mean(vals), rel=1e-12)
            assert std.psnr == pytest.approx(np.std(vals), rel=1e-12, abs=1e-15)

    def test_noise_sweep(self, workspace):
        root, cfg_path = workspace
        cfg = load_config(cfg_path)
        _, rows = run_noise_sweep(cfg, root / "sweep.csv")
        assert len(rows) == 3 * 2 * 3 * 4
        _, cmp_rows = run_compare(cfg, root / "cmp2.csv")
        for r in rows:
            if r.sigma == 0:
                ref = next(c for c in cmp_rows if c.method == r.method and c.instance_id == "mean")
                assert abs(r.psnr - ref.psnr) < 1e-9 and abs(r.ssim - ref.ssim) < 1e-9
        for m in cfg.methods:
            for domain in ("image", "kspace"):
                for seed in range(3):
                    ps = [r.psnr for r in rows if (r.method, r.domain, r.seed) == (m, domain, seed)]
                    assert all(b <= a for a, b in zip(ps, ps[1:])), (m, domain, seed, ps)

    def test_missing_checkpoint(self, workspace, tmp_path):
        _, cfg_path = workspace
        cfg = load_config(cfg_path, [f"hqsnet_checkpoint={tmp_path / 'none.hqn'}"])
        with pytest.raises(MissingCheckpointError):
            build_methods(cfg, ["hqsnet"])

    def test_noise_seed_is_order_free(self):
        a = noise_seed(0, "image", 1, 3)
        assert a == noise_seed(0, "image", 1, 3)
        assert len({a, noise_seed(0, "kspace", 1, 3), noise_seed(0, "image", 2, 3), noise_seed(1, "image", 1, 3)}) == 4


class TestCli:
    def test_unknown_command(self, capsys):
        assert main(["fly"]) == 1
        assert "unknown command" in capsys.readouterr().err

    def test_no_command(self):
        assert main([]) == 1

    def test_unknown_key(self, capsys):
        assert main(["genmask", "--set", "colour=blue"]) == 1
        assert "unknown config key" in capsys.readouterr().err

    def test_runtime_error_exit_2(self, tmp_path):
        (tmp_path / "c.cfg").write_text("dataset = nowhere\noutput = out\n")
        assert main(["evaluate", "--config", str(tmp_path / "c.cfg")]) == 2

    def test_genmask_then_evaluate(self, tmp_path, capsys):
        (tmp_path / "c.cfg").write_text("output = out\nheight = 64\nwidth = 64\n")
        assert main(["genmask", "--config", str(tmp_path / "c.cfg"), "--set", "R=4"]) == 0
        assert main(["evaluate", "--config", str(tmp_path / "c.cfg")]) == 0
        assert "fraction_ok=True" in capsys.readouterr().out

    def test_seed_threads_through(self, tmp_path):
        (tmp_path / "c.cfg").write_text("output = out\nheight = 16\nwidth = 16\n")
        cfg = tmp_path / "c.cfg"
        main(["genmask", "--config", str(cfg), "--seed", "1"])
        a = (tmp_path / "out" / "mask.msk").read_bytes()
        main(["genmask", "--config", str(cfg), "--seed", "2"])
        assert (tmp_path / "out" / "mask.msk").read_bytes() != a

    def test_simulate_solve_reconstruct_evaluate(self, workspace):
        root, cfg = workspace
        assert cli(cfg, "simulate", "--set", "noise_domain=kspace", "--set", "sigma=0.01") == 0
        assert len(list((root / "out" / "measurements").glob("*.grd"))) == 10
        assert cli(cfg, "solve-hqs") == 0
        assert cli(cfg, "reconstruct", "--set", "solver=hqsnet") == 0
        assert cli(cfg, "evaluate") == 0
        rows = read_csv(root / "out" / "evaluate.csv")
        assert {r["method"] for r in rows} == {"hqs", "hqsnet"} and len(rows) == 4

    def test_module_entry_point(self):
        res = subprocess.run([sys.executable, "-m", "hqsnet", "nope"], capture_output=True, text=True)
        assert res.returncode == 1 and "error" in res.stderr

    def test_smoke_pipeline(self, tmp_path):
        (tmp_path / "c.cfg").write_text("count = 8\nheight = 32\nwidth = 32\nepochs = 1\n")
        cfg = tmp_path / "c.cfg"
        t0 = time.perf_counter()
        for cmd in ("gendata", "genmask", "train"):
            assert main([cmd, "--config", str(cfg), "--set", "solver=hqsnet"]) == 0
        assert main(["compare", "--config", str(cfg)]) == 0
        assert time.perf_counter() - t0 < 60
        rows = read_csv(tmp_path / "out" / "compare.csv")
        assert all(math.isfinite(float(r["loss"])) for r in rows)
