"""Unsupervised image restoration: an untrained CNN prior, optionally
coupled to isotropic or space-variant weighted total variation through an
ADMM splitting with automatic per-pixel regularization weights."""

from .admm import AdmmConfig, RunResult, RunTrace, group_shrink, run
from .exceptions import ConfigError, DivergenceError, ProtocolError
from .experiment import (
    ExperimentConfig,
    compare_methods,
    make_synthetic_tomo,
    parse_config,
    run_experiment,
)
from .generator import GeneratorConfig, SeedInput, build_generator, sample_input
from .image import NoiseSpec, add_noise, line_profile, load_image, psnr, save_image, ssim
from .kernels import backend as kernel_backend
from .operators import (
    ForwardOperator,
    apply,
    apply_adjoint,
    convolution_operator,
    div,
    grad,
    identity_operator,
    pointwise_magnitude,
    total_variation,
)

__version__ = "0.1.0"

__all__ = [
    "AdmmConfig",
    "ConfigError",
    "DivergenceError",
    "ExperimentConfig",
    "ForwardOperator",
    "GeneratorConfig",
    "NoiseSpec",
    "ProtocolError",
    "RunResult",
    "RunTrace",
    "SeedInput",
    "add_noise",
    "apply",
    "apply_adjoint",
    "build_generator",
    "compare_methods",
    "convolution_operator",
    "div",
    "grad",
    "group_shrink",
    "identity_operator",
    "kernel_backend",
    "line_profile",
    "load_image",
    "make_synthetic_tomo",
    "parse_config",
    "pointwise_magnitude",
    "psnr",
    "run",
    "run_experiment",
    "sample_input",
    "save_image",
    "ssim",
    "total_variation",
]
