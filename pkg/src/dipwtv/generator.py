"""Encoder-decoder CNN with skip connections, and its fixed random input.

The network maps a frozen low-amplitude random tensor to an image in
[0, 1]; its weights are the only optimization variable of every solver in
this package.
"""

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

from .exceptions import ConfigError

CHECKPOINT_VERSION = 1

#: negative slope of every LeakyReLU in the network
LEAKY_SLOPE = 0.1

# BN epsilon kept tiny so each normalized activation has unit variance to
# well below test tolerances even for the low-variance signals this net
# sees at initialization (the input lives in [0, 0.1])
_BN_EPS = 1e-10


@dataclass(frozen=True)
class GeneratorConfig:
    """Architecture and initialization plan for the generator."""

    levels: int = 4
    down_channels: tuple = (16, 32, 64, 128)
    up_channels: tuple = (16, 32, 64, 128)
    skip_channels: tuple = (4, 4, 4, 4)
    input_channels: int = 32
    output_channels: int = 1
    upsample_mode: str = "bilinear"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "down_channels", tuple(self.down_channels))
        object.__setattr__(self, "up_channels", tuple(self.up_channels))
        object.__setattr__(self, "skip_channels", tuple(self.skip_channels))
        if self.levels < 1:
            raise ConfigError("levels must be >= 1")
        for name in ("down_channels", "up_channels", "skip_channels"):
            chans = getattr(self, name)
            if len(chans) != self.levels:
                raise ConfigError(f"{name} must list {self.levels} entries, got {len(chans)}")
            if any(c < 1 for c in chans):
                raise ConfigError(f"{name} entries must be >= 1")
        if self.input_channels < 1:
            raise ConfigError("input_channels must be >= 1")
        if self.output_channels not in (1, 3):
            raise ConfigError("output_channels must be 1 or 3")
        if self.upsample_mode not in ("bilinear", "nearest"):
            raise ConfigError(f"unknown upsample_mode {self.upsample_mode!r}")


@dataclass(frozen=True)
class SeedInput:
    """Frozen random network input of shape (input_channels, H, W)."""

    data: np.ndarray

    def __post_init__(self):
        self.data.flags.writeable = False

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def tensor(self, dtype=torch.float32) -> torch.Tensor:
        # copy: the frozen array is read-only, which torch cannot wrap
        return torch.from_numpy(self.data.copy()).to(dtype).unsqueeze(0)


def sample_input(cfg: GeneratorConfig, h: int, w: int, seed: int) -> SeedInput:
    """Draw the frozen input, i.i.d. uniform on [0, 0.1]."""
    if h < 8 or w < 8:
        raise ConfigError("input dimensions must be >= 8")
    rng = np.random.default_rng(seed)
    z = rng.uniform(0.0, 0.1, size=(cfg.input_channels, h, w))
    return SeedInput(data=z)


def _conv(in_ch, out_ch, size):
    return nn.Conv2d(in_ch, out_ch, size, padding=size // 2, padding_mode="reflect")


def _encoder_block(in_ch, out_ch):
    return nn.Sequential(
        nn.LeakyReLU(LEAKY_SLOPE),
        nn.BatchNorm2d(in_ch, eps=_BN_EPS),
        _conv(in_ch, out_ch, 3),
        nn.BatchNorm2d(out_ch, eps=_BN_EPS),
        nn.LeakyReLU(LEAKY_SLOPE),
    )


def _skip_block(in_ch, out_ch):
    return nn.Sequential(
        _conv(in_ch, out_ch, 1),
        nn.BatchNorm2d(out_ch, eps=_BN_EPS),
        nn.LeakyReLU(LEAKY_SLOPE),
    )


def _decoder_block(in_ch, out_ch):
    return nn.Sequential(
        _conv(in_ch, out_ch, 1),
        nn.BatchNorm2d(out_ch, eps=_BN_EPS),
        nn.LeakyReLU(LEAKY_SLOPE),
        _conv(out_ch, out_ch, 3),
        nn.BatchNorm2d(out_ch, eps=_BN_EPS),
        nn.LeakyReLU(LEAKY_SLOPE),
    )


class SkipGenerator(nn.Module):
    """Multiscale encoder-decoder with per-level skip branches.

    Each encoder stage refines at its resolution and is followed by 2x max
    pooling; each decoder stage upsamples, concatenates the matching skip
    branch and refines. A final 3x3 convolution plus sigmoid produces the
    output image. Inputs whose sides are not divisible by 2**levels are
    reflect-padded and the output is cropped back.
    """

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.cfg = cfg
        d, u, s = cfg.down_channels, cfg.up_channels, cfg.skip_channels
        enc_in = (cfg.input_channels,) + d[:-1]
        self.encoders = nn.ModuleList(
            _encoder_block(enc_in[i], d[i]) for i in range(cfg.levels)
        )
        self.skips = nn.ModuleList(
            _skip_block(d[i], s[i]) for i in range(cfg.levels)
        )
        # decoder stage i consumes the upsampled signal from below plus skip i
        below = d[-1:] + u[:0:-1]  # (d[L-1], u[L-1], ..., u[1]) feeding stages L-1..0
        dec_in = {i: below[cfg.levels - 1 - i] + s[i] for i in range(cfg.levels)}
        self.decoders = nn.ModuleList(
            _decoder_block(dec_in[i], u[i]) for i in range(cfg.levels)
        )
        self.pool = nn.MaxPool2d(2)
        self.head = _conv(u[0], cfg.output_channels, 3)

    def _upsample(self, x):
        return F.interpolate(x, scale_factor=2, mode=self.cfg.upsample_mode)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        h, w = z.shape[-2:]
        mult = 2**self.cfg.levels
        pad_h = (-h) % mult
        pad_w = (-w) % mult
        if pad_h or pad_w:
            top, left = pad_h // 2, pad_w // 2
            z = F.pad(z, (left, pad_w - left, top, pad_h - top), mode="reflect")
        else:
            top = left = 0

        skips = []
        x = z
        for enc, skip in zip(self.encoders, self.skips):
            x = enc(x)
            skips.append(skip(x))
            x = self.pool(x)
        for dec, s in zip(reversed(self.decoders), reversed(skips)):
            x = self._upsample(x)
            x = dec(torch.cat([x, s], dim=1))
        out = torch.sigmoid(self.head(x))
        return out[:, :, top : top + h, left : left + w]


def build_generator(cfg: GeneratorConfig) -> SkipGenerator:
    """Construct the network with seeded uniform fan-in weight init."""
    torch.manual_seed(cfg.seed)
    return SkipGenerator(cfg)


def parameter_count(cfg: GeneratorConfig) -> int:
    """Analytic number of trainable parameters for a config."""
    d, u, s = cfg.down_channels, cfg.up_channels, cfg.skip_channels

    def conv(cin, cout, k):
        return cin * cout * k * k + cout

    def bn(c):
        return 2 * c

    total = 0
    enc_in = (cfg.input_channels,) + d[:-1]
    for i in range(cfg.levels):
        total += bn(enc_in[i]) + conv(enc_in[i], d[i], 3) + bn(d[i])
        total += conv(d[i], s[i], 1) + bn(s[i])
    below = d[-1:] + u[:0:-1]
    for i in range(cfg.levels):
        cin = below[cfg.levels - 1 - i] + s[i]
        total += conv(cin, u[i], 1) + bn(u[i]) + conv(u[i], u[i], 3) + bn(u[i])
    total += conv(u[0], cfg.output_channels, 3)
    return total


def forward_image(net: SkipGenerator, z: SeedInput) -> np.ndarray:
    """Evaluate the network and return the output as an (H, W, C) array.

    Uses the module's current train/eval mode; gradients are not tracked.
    """
    p = next(net.parameters())
    with torch.no_grad():
        out = net(z.tensor(p.dtype).to(p.device))
    return tensor_to_image(out)


def tensor_to_image(out: torch.Tensor) -> np.ndarray:
    """Convert a (1, C, H, W) tensor to a float64 (H, W, C) array."""
    return out.detach().cpu().double().squeeze(0).permute(1, 2, 0).numpy()


def image_to_tensor(img: np.ndarray, dtype=torch.float32) -> torch.Tensor:
    """Convert an (H, W, C) array to a (1, C, H, W) tensor."""
    return torch.from_numpy(np.ascontiguousarray(img.transpose(2, 0, 1))).to(dtype).unsqueeze(0)


def save_checkpoint(net: SkipGenerator, path) -> None:
    """Write parameters plus config to a single versioned binary file."""
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "config": net.cfg.__dict__ | {},
        "state": net.state_dict(),
    }
    torch.save(payload, path)


def load_checkpoint(path) -> SkipGenerator:
    payload = torch.load(path, weights_only=False)
    version = payload.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ConfigError(f"unsupported checkpoint version {version!r}")
    cfg = GeneratorConfig(**payload["config"])
    net = SkipGenerator(cfg)
    net.load_state_dict(payload["state"])
    return net
