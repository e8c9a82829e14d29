"""Desk-scale calibration sweep on the synthetic phantom (dev helper)."""

import json
import sys
import time

import numpy as np
import torch

torch.set_num_threads(1)

from dipwtv import admm
from dipwtv.admm import AdmmConfig
from dipwtv.experiment import make_synthetic_tomo
from dipwtv.generator import GeneratorConfig
from dipwtv.image import NoiseSpec, add_noise, psnr
from dipwtv.operators import identity_operator

gt = make_synthetic_tomo(64, 1)
g = add_noise(gt, NoiseSpec(sigma=25, seed=7))
print(f"noisy psnr {psnr(g, gt):.3f}", flush=True)

gen = GeneratorConfig(levels=3, down_channels=(16, 32, 64), up_channels=(16, 32, 64),
                      skip_channels=(4, 4, 4), input_channels=16, output_channels=1, seed=3)
op = identity_operator()

outer = int(sys.argv[1]) if len(sys.argv) > 1 else 400

results = {}
jobs = [
    ("dip", AdmmConfig(mode="dip", outer_iters=outer, inner_iters=5, lr=0.01)),
    ("dip_wtv", AdmmConfig(mode="dip_wtv", beta_t=1.0, outer_iters=outer, inner_iters=5, lr=0.01)),
    ("tv_mu_0.002", AdmmConfig(mode="dip_tv", mu=0.002, beta_t=1.0, outer_iters=outer, inner_iters=5, lr=0.01)),
    ("tv_mu_0.005", AdmmConfig(mode="dip_tv", mu=0.005, beta_t=1.0, outer_iters=outer, inner_iters=5, lr=0.01)),
    ("tv_mu_0.01", AdmmConfig(mode="dip_tv", mu=0.01, beta_t=1.0, outer_iters=outer, inner_iters=5, lr=0.01)),
    ("tv_mu_0.02", AdmmConfig(mode="dip_tv", mu=0.02, beta_t=1.0, outer_iters=outer, inner_iters=5, lr=0.01)),
]
for name, cfg in jobs:
    t0 = time.time()
    res = admm.run(cfg, g, op, gen, gt=gt, input_seed=11)
    dt = time.time() - t0
    curve = [r.psnr for r in res.trace.records]
    best = res.best
    final = res.trace.records[-1]
    results[name] = {
        "best_psnr": best.psnr, "best_iter": best.iteration,
        "final_psnr": final.psnr, "gap": best.psnr - final.psnr,
        "secs": dt,
        "curve_every_20": curve[::20],
    }
    print(name, json.dumps(results[name]), flush=True)

with open("/tmp/calibration.json", "w") as fh:
    json.dump(results, fh, indent=1)
print("DONE")
