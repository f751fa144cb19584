"""
Training HQS-Net without ground truth
=====================================

The unrolled network is trained on the classical objective itself, so the
loss only needs the under-sampled measurements. A small supervised
Cascade-Net with the same architecture is trained for comparison.
"""
import time

import numpy as np

from hqsnet import net
from hqsnet.forward import forward_model
from hqsnet.hqs import HqsConfig, objective, solve
from hqsnet.metrics import psnr
from hqsnet.phantoms import make_phantoms
from hqsnet.sampling import generate_mask

mask = generate_mask(32, 32, 4, 2, seed=0)
train_x, val_x, test_x = make_phantoms(40, 32, 32, 1), make_phantoms(5, 32, 32, 2), make_phantoms(5, 32, 32, 3)
samples = lambda xs: [net.Sample(forward_model(x, mask), x) for x in xs]

ncfg = net.NetConfig(K=5, layers_per_block=3, channels=16)
models = {}
for mode in ("unsupervised", "supervised"):
    tcfg = net.TrainConfig(epochs=8, batch=1, mode=mode)
    t0 = time.perf_counter()
    params, hist = net.train(samples(train_x), ncfg, tcfg, samples(val_x))
    models[mode] = params
    print(f"{mode}: {time.perf_counter() - t0:.1f}s, best epoch {hist.best_epoch}, "
          f"train loss {hist.train_loss[0]:.3f} -> {hist.train_loss[-1]:.3f}")

# --- compare against the instance-wise solver on held-out images ---
for x in test_x[:3]:
    y = forward_model(x, mask)
    t0 = time.perf_counter()
    xs, _ = solve(y, HqsConfig(outer_max=200))
    t_hqs = time.perf_counter() - t0
    t0 = time.perf_counter()
    xn = net.reconstruct(models["unsupervised"], y, ncfg)
    t_net = time.perf_counter() - t0
    xc = net.reconstruct(models["supervised"], y, ncfg)
    print(f"loss HQS {objective(xs, y, .005, .002):.4f} ({t_hqs:.2f}s)  "
          f"HQS-Net {objective(xn, y, .005, .002):.4f} ({t_net * 1e3:.1f}ms)  "
          f"PSNR {psnr(xs, x):.1f} / {psnr(xn, x):.1f} / Cascade {psnr(xc, x):.1f} dB")

net.save_checkpoint(models["unsupervised"], ncfg, "/tmp/demo_hqsnet.hqn")
params, cfg = net.load_checkpoint("/tmp/demo_hqsnet.hqn")
print("checkpoint config:", cfg)
