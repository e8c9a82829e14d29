"""Image containers, degradation simulation and full-reference metrics.

An image is a float64 numpy array of shape (H, W, C) with C in {1, 3} and
values in [0, 1] for clean data. Noisy observations are deliberately NOT
clipped (clipping would change the noise statistics the fidelity term
models); clipping happens on save.
"""

import math
from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage
from scipy import ndimage

#: ITU-R BT.601 luminance weights for grayscale conversion.
_LUMA = np.array([0.2989, 0.5870, 0.1140])

# standard windowed-SSIM constants
_SSIM_WIN = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03


@dataclass(frozen=True)
class NoiseSpec:
    """Additive white Gaussian noise, sigma on the 0-255 scale."""

    kind: str = "gaussian"
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind != "gaussian":
            raise ValueError(f"unsupported noise kind: {self.kind!r}")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")


def validate_image(img: np.ndarray) -> np.ndarray:
    """Check the (H, W, C) container invariants and return the array."""
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ValueError(f"expected (H, W, C) with C in {{1, 3}}, got {img.shape}")
    if img.shape[0] < 8 or img.shape[1] < 8:
        raise ValueError(f"image must be at least 8x8, got {img.shape[:2]}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    return img


def load_image(path, grayscale: bool = False) -> np.ndarray:
    """Load an 8- or 16-bit PNG/raster into a float64 (H, W, C) array in [0, 1].

    Parameters
    ----------
    path : str or Path
        File readable by Pillow.
    grayscale : bool
        Convert color input to a single luminance channel.
    """
    try:
        with PILImage.open(path) as im:
            if im.mode == "P":
                im = im.convert("RGB")
            if im.mode in ("I", "I;16"):
                arr = np.asarray(im, dtype=np.float64) / 65535.0
            elif im.mode == "L":
                arr = np.asarray(im, dtype=np.float64) / 255.0
            elif im.mode == "RGB":
                arr = np.asarray(im, dtype=np.float64) / 255.0
            else:
                raise ValueError(f"unsupported image mode {im.mode!r} in {path}")
    except ValueError:
        raise
    except Exception as exc:
        raise ValueError(f"cannot decode image {path}: {exc}") from exc

    if arr.ndim == 2:
        arr = arr[:, :, None]
    if grayscale and arr.shape[2] == 3:
        arr = (arr @ _LUMA)[:, :, None]
    return validate_image(arr)


def save_image(img: np.ndarray, path) -> None:
    """Clip to [0, 1], quantize to 8 bit and write a PNG."""
    validate_image(img)
    u8 = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    if u8.shape[2] == 1:
        pil = PILImage.fromarray(u8[:, :, 0], mode="L")
    else:
        pil = PILImage.fromarray(u8, mode="RGB")
    pil.save(path, format="PNG")


def to_pixel_grid(img: np.ndarray) -> np.ndarray:
    """Clip and snap to the 8-bit grid, i.e. the values a saved PNG holds.

    Run traces measure restorations on this grid so that logged metrics can
    be reproduced exactly from emitted files.
    """
    return np.round(np.clip(img, 0.0, 1.0) * 255.0) / 255.0


def add_noise(img: np.ndarray, spec: NoiseSpec) -> np.ndarray:
    """Add white Gaussian noise with standard deviation sigma/255.

    The output is not clipped. A fixed seed gives a bit-identical
    realization; the RNG is local to the call.
    """
    validate_image(img)
    rng = np.random.default_rng(spec.seed)
    return img + rng.normal(0.0, spec.sigma / 255.0, size=img.shape)


def psnr(x: np.ndarray, ref: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB with data range 1.0.

    Returns +inf when the images are identical.
    """
    if x.shape != ref.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {ref.shape}")
    mse = float(np.mean((x - ref) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _ssim_window():
    half = _SSIM_WIN // 2
    t = np.arange(_SSIM_WIN) - half
    g = np.exp(-(t**2) / (2.0 * _SSIM_SIGMA**2))
    return g / g.sum()


def _windowed_mean(x, g):
    # separable valid-mode Gaussian correlation: filter then crop the
    # border the window cannot cover
    half = _SSIM_WIN // 2
    y = ndimage.correlate1d(x, g, axis=0, mode="constant")
    y = ndimage.correlate1d(y, g, axis=1, mode="constant")
    return y[half:-half, half:-half]


def ssim(x: np.ndarray, ref: np.ndarray) -> float:
    """Mean structural similarity with an 11x11 Gaussian window (sigma 1.5).

    Uses the standard constants K1=0.01, K2=0.03 and data range 1.0. Color
    images score as the mean over channels.
    """
    if x.shape != ref.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {ref.shape}")
    if min(x.shape[0], x.shape[1]) < _SSIM_WIN:
        raise ValueError(f"image smaller than the {_SSIM_WIN}x{_SSIM_WIN} window")
    g = _ssim_window()
    c1 = _SSIM_K1**2
    c2 = _SSIM_K2**2
    scores = []
    for c in range(x.shape[2]):
        a = x[:, :, c]
        b = ref[:, :, c]
        mu_a = _windowed_mean(a, g)
        mu_b = _windowed_mean(b, g)
        var_a = _windowed_mean(a * a, g) - mu_a**2
        var_b = _windowed_mean(b * b, g) - mu_b**2
        cov = _windowed_mean(a * b, g) - mu_a * mu_b
        num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
        den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
        scores.append(float(np.mean(num / den)))
    return float(np.mean(scores))


def line_profile(img: np.ndarray, row: int) -> np.ndarray:
    """Pixel values of one row (channel 0)."""
    validate_image(img)
    if not 0 <= row < img.shape[0]:
        raise IndexError(f"row {row} outside [0, {img.shape[0]})")
    return img[row, :, 0].copy()
