"""Linear forward operators and the discrete gradient/divergence pair.

The gradient uses forward differences with a zero trailing boundary
(Neumann-type), so the total variation of a constant image is exactly zero
and the divergence below is the exact negative adjoint.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.signal import convolve2d

from . import kernels
from .image import validate_image


@dataclass(frozen=True)
class ForwardOperator:
    """Linear degradation operator: identity or 2-D convolutional blur.

    Convolution kernels must have odd dimensions and sum to one; the
    boundary is replicate-padded.
    """

    kind: str = "identity"
    kernel: np.ndarray | None = field(default=None)
    boundary: str = "replicate"

    def __post_init__(self):
        if self.kind not in ("identity", "convolution"):
            raise ValueError(f"unknown operator kind {self.kind!r}")
        if self.boundary != "replicate":
            raise ValueError(f"unsupported boundary {self.boundary!r}")
        if self.kind == "identity":
            if self.kernel is not None:
                raise ValueError("identity operator takes no kernel")
            return
        k = self.kernel
        if k is None or np.asarray(k).ndim != 2:
            raise ValueError("convolution operator needs a 2-D kernel")
        k = np.asarray(k, dtype=np.float64)
        if k.shape[0] % 2 == 0 or k.shape[1] % 2 == 0:
            raise ValueError(f"kernel dimensions must be odd, got {k.shape}")
        if abs(k.sum() - 1.0) > 1e-6:
            raise ValueError(f"blur kernel must sum to 1, got {k.sum():.8f}")
        object.__setattr__(self, "kernel", k)


def identity_operator() -> ForwardOperator:
    return ForwardOperator(kind="identity")


def convolution_operator(kernel: np.ndarray) -> ForwardOperator:
    return ForwardOperator(kind="convolution", kernel=kernel)


def load_kernel(path) -> np.ndarray:
    """Read a blur kernel from whitespace-separated rows of plain text."""
    k = np.loadtxt(path, dtype=np.float64, ndmin=2)
    return k


def apply(op: ForwardOperator, u: np.ndarray) -> np.ndarray:
    """Apply the forward operator channel by channel."""
    validate_image(u)
    if op.kind == "identity":
        return u.copy()
    k = op.kernel
    if k.shape[0] > u.shape[0] or k.shape[1] > u.shape[1]:
        raise ValueError(f"kernel {k.shape} larger than image {u.shape[:2]}")
    out = np.empty_like(u)
    for c in range(u.shape[2]):
        out[:, :, c] = ndimage.convolve(u[:, :, c], k, mode="nearest")
    return out


def apply_adjoint(op: ForwardOperator, v: np.ndarray) -> np.ndarray:
    """Exact adjoint of ``apply`` under the Euclidean inner product."""
    validate_image(v)
    if op.kind == "identity":
        return v.copy()
    k = op.kernel
    if k.shape[0] > v.shape[0] or k.shape[1] > v.shape[1]:
        raise ValueError(f"kernel {k.shape} larger than image {v.shape[:2]}")
    ph, pw = k.shape[0] // 2, k.shape[1] // 2
    out = np.empty_like(v)
    for c in range(v.shape[2]):
        # adjoint of valid convolution of the padded image: full convolution
        # with the flipped kernel, then fold the pad strips back onto the
        # edge rows/columns (adjoint of replicate padding)
        w = convolve2d(v[:, :, c], k[::-1, ::-1], mode="full")
        if ph:
            w[ph] += w[:ph].sum(axis=0)
            w[-ph - 1] += w[-ph:].sum(axis=0)
            w = w[ph:-ph]
        if pw:
            w[:, pw] += w[:, :pw].sum(axis=1)
            w[:, -pw - 1] += w[:, -pw:].sum(axis=1)
            w = w[:, pw:-pw]
        out[:, :, c] = w
    return out


def grad(u: np.ndarray) -> np.ndarray:
    """Forward-difference gradient field of shape (H, W, C, 2).

    Component 0 holds horizontal differences u[r, c+1] - u[r, c] (zero in
    the last column), component 1 vertical differences (zero in the last
    row).
    """
    validate_image(u)
    return kernels.grad_field(np.ascontiguousarray(u, dtype=np.float64))


def div(p: np.ndarray) -> np.ndarray:
    """Negative adjoint of ``grad``: <grad u, p> = -<u, div p> exactly."""
    return kernels.divergence(np.ascontiguousarray(p, dtype=np.float64))


def pointwise_magnitude(p: np.ndarray) -> np.ndarray:
    """Euclidean norm over the 2*C gradient components at each pixel."""
    return kernels.pointwise_magnitude(np.ascontiguousarray(p, dtype=np.float64))


def total_variation(u: np.ndarray) -> float:
    """Isotropic (vectorial across channels) total variation of an image."""
    return float(pointwise_magnitude(grad(u)).sum())
