"""Inexact network-weight subproblem: a fixed number of Adam steps.

The composite loss couples the data-fidelity term with a quadratic penalty
tying the network output's gradient field to a frozen target field; in
plain mode only the fidelity term is optimized. Gradients come from
reverse-mode autodiff through the generator.
"""

from dataclasses import dataclass, field

import numpy as np
import torch

from .exceptions import DivergenceError
from .generator import SeedInput, SkipGenerator, image_to_tensor
from .operators import ForwardOperator

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class ThetaLossSpec:
    """Inputs of the weight-subproblem loss.

    ``target`` is the precombined field the output gradient is pulled
    toward; it is frozen for the whole inner loop. ``mode`` is 'admm'
    (fidelity + penalty) or 'dip_only' (fidelity alone).
    """

    operator: ForwardOperator
    observed: np.ndarray
    beta_t: float = 0.0
    target: np.ndarray | None = None
    mode: str = "admm"

    def __post_init__(self):
        if self.mode not in ("admm", "dip_only"):
            raise ValueError(f"unknown loss mode {self.mode!r}")
        if self.mode == "admm":
            if self.beta_t <= 0:
                raise ValueError("beta_t must be > 0 in admm mode")
            if self.target is None:
                raise ValueError("admm mode needs a target field")
            expected = self.observed.shape + (2,)
            if self.target.shape != expected:
                raise ValueError(
                    f"target field shape {self.target.shape} != {expected}"
                )


def torch_apply_operator(op: ForwardOperator, x: torch.Tensor) -> torch.Tensor:
    """Differentiable forward operator on a (1, C, H, W) tensor.

    Matches the numpy ``operators.apply`` exactly: true convolution with
    replicate padding.
    """
    if op.kind == "identity":
        return x
    k = np.ascontiguousarray(op.kernel[::-1, ::-1])
    c = x.shape[1]
    weight = torch.from_numpy(k).to(x.dtype).repeat(c, 1, 1, 1)
    ph, pw = op.kernel.shape[0] // 2, op.kernel.shape[1] // 2
    xp = torch.nn.functional.pad(x, (pw, pw, ph, ph), mode="replicate")
    return torch.nn.functional.conv2d(xp, weight, groups=c)


def torch_grad(x: torch.Tensor) -> torch.Tensor:
    """Forward-difference gradient of a (1, C, H, W) tensor.

    Returns (1, C, H, W, 2) with the same component order and trailing-zero
    boundary as ``operators.grad``.
    """
    dh = torch.nn.functional.pad(x[..., :, 1:] - x[..., :, :-1], (0, 1))
    dv = torch.nn.functional.pad(x[..., 1:, :] - x[..., :-1, :], (0, 0, 0, 1))
    return torch.stack((dh, dv), dim=-1)


def field_to_tensor(p: np.ndarray, dtype=torch.float32) -> torch.Tensor:
    """(H, W, C, 2) field to (1, C, H, W, 2) tensor."""
    return torch.from_numpy(np.ascontiguousarray(p.transpose(2, 0, 1, 3))).to(dtype).unsqueeze(0)


def tensor_to_field(t: torch.Tensor) -> np.ndarray:
    """(1, C, H, W, 2) tensor to a float64 (H, W, C, 2) field."""
    return t.detach().cpu().double().squeeze(0).permute(1, 2, 0, 3).numpy()


class _LossContext:
    """Tensors of a ThetaLossSpec, prebuilt once for the inner loop."""

    def __init__(self, spec: ThetaLossSpec, dtype, device):
        self.spec = spec
        self.g = image_to_tensor(spec.observed, dtype).to(device)
        self.target = None
        if spec.mode == "admm":
            self.target = field_to_tensor(spec.target, dtype).to(device)

    def loss(self, out: torch.Tensor) -> torch.Tensor:
        spec = self.spec
        residual = torch_apply_operator(spec.operator, out) - self.g
        value = 0.5 * residual.pow(2).sum()
        if spec.mode == "admm":
            mismatch = torch_grad(out) - self.target
            value = value + 0.5 * spec.beta_t * mismatch.pow(2).sum()
        return value


def theta_loss(net: SkipGenerator, z: SeedInput, spec: ThetaLossSpec) -> torch.Tensor:
    """Composite loss at the current weights; differentiable w.r.t. them."""
    p = next(net.parameters())
    ctx = _LossContext(spec, p.dtype, p.device)
    out = net(z.tensor(p.dtype).to(p.device))
    if out.shape != ctx.g.shape:
        raise ValueError(f"network output {tuple(out.shape)} != observed {tuple(ctx.g.shape)}")
    return ctx.loss(out)


@dataclass
class AdamState:
    """Adam moments and hyperparameters bound to one parameter set."""

    lr: float
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS
    step_count: int = 0
    optimizer: torch.optim.Adam = field(default=None, repr=False)

    @classmethod
    def for_params(cls, params, lr: float, beta1: float = ADAM_BETA1,
                   beta2: float = ADAM_BETA2, eps: float = ADAM_EPS) -> "AdamState":
        params = list(params)
        opt = torch.optim.Adam(params, lr=lr, betas=(beta1, beta2), eps=eps)
        return cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps, optimizer=opt)


def adam_step(params, grads, state: AdamState):
    """One bias-corrected Adam update; mutates params and state in place.

    ``params`` and ``grads`` are parallel tensor sequences. Non-finite
    gradients abort with a DivergenceError.
    """
    params = list(params)
    grads = list(grads)
    if len(params) != len(grads):
        raise ValueError("params and grads must align")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {tuple(g.shape)} != parameter {tuple(p.shape)}")
        if not torch.isfinite(g).all():
            raise DivergenceError(
                f"non-finite gradient (step {state.step_count + 1}, shape {tuple(g.shape)})"
            )
        p.grad = g
    state.optimizer.step()
    state.optimizer.zero_grad(set_to_none=True)
    state.step_count += 1
    return params, state


def solve_theta_subproblem(net: SkipGenerator, z: SeedInput, spec: ThetaLossSpec,
                           n_inner: int, adam: AdamState):
    """Run exactly ``n_inner`` loss/gradient/update cycles.

    The Adam state persists across calls (warm moments stabilize the
    inexact solves of an outer loop). Returns the loss evaluated after the
    final update together with the matching network output tensor.
    """
    if n_inner < 1:
        raise ValueError("n_inner must be >= 1")
    p = next(net.parameters())
    ctx = _LossContext(spec, p.dtype, p.device)
    z_t = z.tensor(p.dtype).to(p.device)
    params = [q for group in adam.optimizer.param_groups for q in group["params"]]
    for _ in range(n_inner):
        loss = ctx.loss(net(z_t))
        if not torch.isfinite(loss):
            raise DivergenceError(f"non-finite loss at inner step {adam.step_count + 1}")
        grads = torch.autograd.grad(loss, params, allow_unused=False)
        adam_step(params, grads, adam)
    with torch.no_grad():
        out = net(z_t)
        final = ctx.loss(out)
    if not torch.isfinite(final):
        raise DivergenceError("non-finite loss after inner solve")
    return float(final), out
