"""Pure-numpy implementations of the per-pixel field kernels.

Twin of the compiled extension ``_kernels_cy``; both expose the same four
functions and must produce identical float64 results. Arrays are C-contiguous
float64: images (H, W, C), gradient fields (H, W, C, 2) with component 0 the
horizontal and component 1 the vertical forward difference.
"""

import numpy as np


def grad_field(u):
    h, w, c = u.shape
    out = np.zeros((h, w, c, 2), dtype=np.float64)
    out[:, : w - 1, :, 0] = u[:, 1:, :] - u[:, : w - 1, :]
    out[: h - 1, :, :, 1] = u[1:, :, :] - u[: h - 1, :, :]
    return out


def divergence(p):
    h, w, c, _ = p.shape
    out = np.zeros((h, w, c), dtype=np.float64)
    # negative adjoint of grad_field: trailing column/row of p is ignored,
    # matching the zero rows of the gradient matrix
    out[:, : w - 1, :] += p[:, : w - 1, :, 0]
    out[:, 1:, :] -= p[:, : w - 1, :, 0]
    out[: h - 1, :, :] += p[: h - 1, :, :, 1]
    out[1:, :, :] -= p[: h - 1, :, :, 1]
    return out


def pointwise_magnitude(p):
    return np.sqrt(np.einsum("hwcd,hwcd->hw", p, p))


def group_shrink_field(w, tau):
    """Per-pixel group shrinkage of a gradient field.

    At each pixel the 2*C-vector v is mapped to max(|v|-tau, 0) * v/|v|,
    with the zero vector kept at zero.
    """
    mag = pointwise_magnitude(w)
    scale = np.zeros_like(mag)
    nz = mag > 0.0
    scale[nz] = np.maximum(mag[nz] - tau[nz], 0.0) / mag[nz]
    return w * scale[:, :, None, None]
