"""
Noise, metrics and relative scores
==================================

Image-domain and k-space noise, and metrics reported relative to the
zero-filled reconstruction.
"""
from hqsnet.experiments import noisy_measurements
from hqsnet.forward import zero_filled
from hqsnet.hqs import HqsConfig, solve
from hqsnet.metrics import relative_metrics
from hqsnet.phantoms import make_phantoms
from hqsnet.sampling import generate_mask

x = make_phantoms(1, 32, 32, seed=8)[0]
mask = generate_mask(32, 32, 4, 2, seed=0)

print("domain  sigma   PSNR    rel_PSNR  SSIM    -HFEN")
for domain in ("image", "kspace"):
    for sigma in (0.0, 0.025, 0.05, 0.1):
        y = noisy_measurements(x, mask, domain, sigma, seed=0)
        xs, _ = solve(y, HqsConfig(outer_max=20))
        m = relative_metrics(abs(xs), abs(zero_filled(y)), x)
        print(f"{domain:7s} {sigma:5.3f}  {m.psnr_db:6.2f}  {m.rel_psnr:+7.2f}  {m.ssim:.4f}  {m.neg_hfen:.4f}")
