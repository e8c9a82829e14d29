"""Experiment driver: strict JSON configs, degradation synthesis, method
dispatch and artifact emission.

All randomness flows from three named seeds (noise, weights, input); there
is no wall-clock seeding, so a config plus the deterministic flag pins a
run completely.
"""

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import admm, operators
from .admm import AdmmConfig
from .exceptions import ConfigError, DivergenceError, ProtocolError
from .generator import GeneratorConfig
from .image import NoiseSpec, add_noise, line_profile, load_image, psnr, save_image
from .kernels import backend as kernel_backend

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Seeds:
    noise: int
    weights: int
    input: int


@dataclass(frozen=True)
class DegradationSpec:
    kind: str = "gaussian"
    sigma: float = 0.0
    blur_kernel_path: str | None = None


@dataclass(frozen=True)
class EmitSpec:
    restored: bool = True
    best: bool = True
    trace_csv: bool = True
    profiles: tuple = ()


@dataclass(frozen=True)
class ExperimentConfig:
    input_path: str
    degradation: DegradationSpec
    method: AdmmConfig
    generator: GeneratorConfig
    seeds: Seeds
    output_dir: str
    grayscale: bool = False
    emit: EmitSpec = field(default_factory=EmitSpec)
    deterministic: bool = True

    def to_json_dict(self) -> dict:
        gen = {k: v for k, v in self.generator.__dict__.items() if k != "seed"}
        gen = {k: list(v) if isinstance(v, tuple) else v for k, v in gen.items()}
        method = dict(self.method.__dict__)
        return {
            "schema_version": SCHEMA_VERSION,
            "input_path": self.input_path,
            "grayscale": self.grayscale,
            "degradation": {
                "noise": {"kind": self.degradation.kind, "sigma": self.degradation.sigma},
                "blur_kernel_path": self.degradation.blur_kernel_path,
            },
            "method": method,
            "generator": gen,
            "seeds": dict(self.seeds.__dict__),
            "output_dir": self.output_dir,
            "emit": {
                "restored": self.emit.restored,
                "best": self.emit.best,
                "trace_csv": self.emit.trace_csv,
                "profiles": list(self.emit.profiles),
            },
            "deterministic": self.deterministic,
        }

    def config_hash(self) -> str:
        canon = json.dumps(self.to_json_dict(), sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()


def _check_keys(d: dict, ctx: str, required: tuple, optional: tuple = ()):
    if not isinstance(d, dict):
        raise ConfigError(f"{ctx} must be an object")
    for key in d:
        if key not in required and key not in optional:
            raise ConfigError(f"unknown key {key!r} in {ctx}")
    for key in required:
        if key not in d:
            raise ConfigError(f"missing key {key!r} in {ctx}")


def _build(cls, kwargs: dict, ctx: str):
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {ctx}: {exc}") from exc


def parse_config_dict(raw: dict) -> ExperimentConfig:
    """Validate a config dictionary; unknown keys are rejected."""
    _check_keys(
        raw, "config",
        required=("schema_version", "input_path", "degradation", "method",
                  "generator", "seeds", "output_dir"),
        optional=("grayscale", "emit", "deterministic"),
    )
    if raw["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {raw['schema_version']!r}")

    deg_raw = raw["degradation"]
    _check_keys(deg_raw, "degradation", required=("noise",), optional=("blur_kernel_path",))
    noise_raw = deg_raw["noise"]
    _check_keys(noise_raw, "degradation.noise", required=("kind", "sigma"))
    degradation = _build(
        DegradationSpec,
        {"kind": noise_raw["kind"], "sigma": float(noise_raw["sigma"]),
         "blur_kernel_path": deg_raw.get("blur_kernel_path")},
        "degradation",
    )
    if degradation.kind != "gaussian":
        raise ConfigError(f"unknown noise kind {degradation.kind!r}")
    if degradation.sigma < 0:
        raise ConfigError("degradation.noise.sigma must be >= 0")

    seeds_raw = raw["seeds"]
    _check_keys(seeds_raw, "seeds", required=("noise", "weights", "input"))
    for name, val in seeds_raw.items():
        if not isinstance(val, int):
            raise ConfigError(f"seeds.{name} must be an integer")
    seeds = Seeds(**seeds_raw)

    method_raw = raw["method"]
    _check_keys(
        method_raw, "method",
        required=("mode", "outer_iters", "inner_iters"),
        optional=("beta_t", "mu", "lr", "eps_grad", "eps_mu", "checkpoint_every"),
    )
    method = _build(AdmmConfig, method_raw, "method")

    gen_raw = dict(raw["generator"])
    _check_keys(
        gen_raw, "generator",
        required=(),
        optional=("levels", "down_channels", "up_channels", "skip_channels",
                  "input_channels", "output_channels", "upsample_mode"),
    )
    gen_raw["seed"] = seeds.weights
    generator = _build(GeneratorConfig, gen_raw, "generator")

    emit_raw = raw.get("emit", {})
    _check_keys(emit_raw, "emit", required=(),
                optional=("restored", "best", "trace_csv", "profiles"))
    profiles = emit_raw.get("profiles", [])
    if not all(isinstance(r, int) and r >= 0 for r in profiles):
        raise ConfigError("emit.profiles must be non-negative integers")
    emit = EmitSpec(
        restored=bool(emit_raw.get("restored", True)),
        best=bool(emit_raw.get("best", True)),
        trace_csv=bool(emit_raw.get("trace_csv", True)),
        profiles=tuple(profiles),
    )

    return ExperimentConfig(
        input_path=str(raw["input_path"]),
        grayscale=bool(raw.get("grayscale", False)),
        degradation=degradation,
        method=method,
        generator=generator,
        seeds=seeds,
        output_dir=str(raw["output_dir"]),
        emit=emit,
        deterministic=bool(raw.get("deterministic", True)),
    )


def parse_config(path) -> ExperimentConfig:
    """Load and validate one experiment config file (strict JSON)."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    return parse_config_dict(raw)


def _forward_operator(cfg: ExperimentConfig) -> operators.ForwardOperator:
    path = cfg.degradation.blur_kernel_path
    if path is None:
        return operators.identity_operator()
    return operators.convolution_operator(operators.load_kernel(path))


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run one config end to end and emit its artifacts.

    Returns the metric summary that also lands in the manifest. Solver
    divergence still writes the partial trace and manifest before the
    exception propagates.
    """
    if cfg.deterministic:
        torch.set_num_threads(1)

    gt = load_image(cfg.input_path, cfg.grayscale)
    if gt.shape[2] != cfg.generator.output_channels:
        raise ConfigError(
            f"input has {gt.shape[2]} channels but generator.output_channels "
            f"is {cfg.generator.output_channels}"
        )
    for row in cfg.emit.profiles:
        if row >= gt.shape[0]:
            raise ConfigError(f"emit.profiles row {row} outside image height {gt.shape[0]}")

    op = _forward_operator(cfg)
    noise = NoiseSpec(kind=cfg.degradation.kind, sigma=cfg.degradation.sigma,
                      seed=cfg.seeds.noise)
    g = add_noise(operators.apply(op, gt), noise)

    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []

    def finalize(trace, status, summary):
        if cfg.emit.trace_csv:
            trace.write_csv(out_dir / "trace.csv")
            files.append("trace.csv")
        files.extend(p.name for p in out_dir.glob("checkpoint_*"))
        files.append("manifest.json")
        manifest = {
            "schema_version": SCHEMA_VERSION,
            "status": status,
            "config": cfg.to_json_dict(),
            "config_hash": cfg.config_hash(),
            "seeds": dict(cfg.seeds.__dict__),
            "kernel_backend": kernel_backend(),
            "files": sorted(files),
            "metrics": summary,
        }
        with open(out_dir / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)

    try:
        result = admm.run(
            cfg.method, g, op, cfg.generator, gt=gt,
            input_seed=cfg.seeds.input,
            checkpoint_dir=out_dir if cfg.method.checkpoint_every > 0 else None,
        )
    except DivergenceError as exc:
        finalize(getattr(exc, "trace", admm.RunTrace()), "diverged", {})
        raise

    best = result.best
    final = result.trace.records[-1]
    summary = {
        "best_psnr": best.psnr,
        "best_ssim": best.ssim,
        "best_iteration": best.iteration,
        "final_psnr": final.psnr,
        "final_ssim": final.ssim,
        "stability_gap_db": best.psnr - final.psnr,
        "noisy_psnr": psnr(g, gt),
    }

    if cfg.emit.restored:
        save_image(result.image, out_dir / "restored.png")
        files.append("restored.png")
    if cfg.emit.best:
        save_image(best.image, out_dir / "best.png")
        files.append("best.png")
    for row in cfg.emit.profiles:
        name = f"profile_{row}.csv"
        with open(out_dir / name, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["column", "ground_truth", "noisy", "restored"])
            gt_row = line_profile(gt, row)
            noisy_row = g[row, :, 0]
            restored_row = line_profile(result.image, row)
            for c in range(gt.shape[1]):
                w.writerow([c, repr(gt_row[c]), repr(float(noisy_row[c])),
                            repr(restored_row[c])])
        files.append(name)

    finalize(result.trace, "ok", summary)
    return summary


def compare_methods(cfgs: list, out_csv=None) -> list:
    """Run several configs over one shared degradation and tabulate them.

    All configs must agree on the input image and the degradation
    (including its seed); otherwise the comparison is meaningless and a
    ProtocolError is raised.
    """
    if not cfgs:
        raise ProtocolError("compare_methods needs at least one config")
    ref = cfgs[0]
    for cfg in cfgs[1:]:
        if cfg.input_path != ref.input_path or cfg.grayscale != ref.grayscale:
            raise ProtocolError("configs must share the input image")
        if cfg.degradation != ref.degradation:
            raise ProtocolError("configs must share the degradation")
        if cfg.seeds.noise != ref.seeds.noise:
            raise ProtocolError("configs must share the degradation seed")

    rows = []
    labels = []
    for cfg in cfgs:
        label = cfg.method.mode
        if label in labels:
            label = f"{label}_{labels.count(label) + 1}"
        labels.append(cfg.method.mode)
        summary = run_experiment(cfg)
        rows.append({
            "method": label,
            "best_psnr": summary["best_psnr"],
            "best_ssim": summary["best_ssim"],
            "final_psnr": summary["final_psnr"],
            "final_ssim": summary["final_ssim"],
            "best_iteration": summary["best_iteration"],
            "stability_gap_db": summary["stability_gap_db"],
        })

    if out_csv is not None:
        with open(out_csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            w.writeheader()
            for row in rows:
                w.writerow({k: (v if isinstance(v, (int, str)) else repr(v))
                            for k, v in row.items()})
    return rows


def make_synthetic_tomo(size: int, seed: int) -> np.ndarray:
    """Piecewise-constant grayscale phantom with known ground truth.

    Background plus low-contrast (+0.08) and high-contrast (+0.6) objects,
    each in a small and a large variant, jittered by the seed. The output
    takes at most three distinct values besides the background.
    """
    if size < 64:
        raise ValueError("phantom size must be >= 64")
    rng = np.random.default_rng(seed)
    background = 0.15
    low = background + 0.08
    high = background + 0.6
    img = np.full((size, size, 1), background)
    yy, xx = np.mgrid[0:size, 0:size]

    def jitter(scale):
        return int(rng.integers(-scale, scale + 1))

    def disk(cy, cx, r, value):
        mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
        img[mask, 0] = value

    def rect(cy, cx, hh, hw, value):
        img[max(cy - hh, 0):cy + hh, max(cx - hw, 0):cx + hw, 0] = value

    s = size // 64
    j = 2 * s
    # large high-contrast block and small high-contrast disk
    rect(size // 4 + jitter(j), size // 4 + jitter(j), 10 * s, 8 * s, high)
    disk(size // 4 + jitter(j), 3 * size // 4 + jitter(j), 3 * s, high)
    # large and small low-contrast disks
    disk(3 * size // 4 + jitter(j), size // 4 + jitter(j), 9 * s, low)
    disk(3 * size // 4 + jitter(j), 3 * size // 4 + jitter(j), 2 * s, low)
    # medium low-contrast block between the quadrants
    rect(size // 2 + jitter(j), size // 2 + jitter(j), 4 * s, 5 * s, low)
    return img
