"""SRResNet generator: configuration, construction, forward pass, checkpoints.

The generator is the classic super-resolution residual network: a 9x9 head
convolution with PReLU, a chain of conv-BN-PReLU-conv-BN residual blocks,
a post-body conv-BN stage closed by a global skip connection, log2(k)
sub-pixel upsampling stages, and a 9x9 tail convolution. All PReLU
activations use a single shared slope, which together with 3 input
channels and 16 residual blocks gives the reference parameter count of
1,549,462 at 4x upscaling.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import torch
import torch.nn as nn

VALID_FACTORS = (2, 4, 8, 16)
CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class SRResNetConfig:
    in_channels: int = 3
    feature_channels: int = 64
    num_residual_blocks: int = 16
    upscale_factor: int = 4
    head_kernel_size: int = 9
    body_kernel_size: int = 3

    def __post_init__(self) -> None:
        if self.upscale_factor not in VALID_FACTORS:
            raise ValueError(
                f"upscale factor must be a power of two in {VALID_FACTORS}, got {self.upscale_factor}"
            )
        if self.num_residual_blocks < 1:
            raise ValueError(f"need at least one residual block, got {self.num_residual_blocks}")
        if self.in_channels < 1 or self.feature_channels < 1:
            raise ValueError("channel counts must be positive")
        if self.head_kernel_size % 2 == 0 or self.body_kernel_size % 2 == 0:
            raise ValueError("kernel sizes must be odd")

    @property
    def num_upsample_stages(self) -> int:
        return self.upscale_factor.bit_length() - 1

    @classmethod
    def reference(cls, upscale_factor: int = 4) -> "SRResNetConfig":
        """3-channel, 16-block configuration (1,549,462 parameters at k=4)."""
        return cls(in_channels=3, num_residual_blocks=16, upscale_factor=upscale_factor)

    @classmethod
    def economy(cls, upscale_factor: int = 4) -> "SRResNetConfig":
        """1-channel, 5-block configuration for grayscale maps on a budget."""
        return cls(in_channels=1, num_residual_blocks=5, upscale_factor=upscale_factor)


def pixel_shuffle(t: torch.Tensor, r: int) -> torch.Tensor:
    """Rearrange a (..., c*r*r, h, w) tensor to (..., c, h*r, w*r).

    Channel c*r*r + index (c, di, dj) lands at output position
    (c, r*i + di, r*j + dj); the multiset of values is preserved.
    """
    if r < 1:
        raise ValueError(f"shuffle factor must be >= 1, got {r}")
    if t.dim() == 3:
        return pixel_shuffle(t.unsqueeze(0), r).squeeze(0)
    if t.dim() != 4:
        raise ValueError(f"expected a 3-D or 4-D tensor, got {t.dim()}-D")
    n, c2, h, w = t.shape
    if c2 % (r * r):
        raise ValueError(f"channel count {c2} is not divisible by {r}^2")
    c = c2 // (r * r)
    t = t.reshape(n, c, r, r, h, w)
    t = t.permute(0, 1, 4, 2, 5, 3)
    return t.reshape(n, c, h * r, w * r)


class PixelShuffle(nn.Module):
    def __init__(self, r: int):
        super().__init__()
        self.r = r

    def forward(self, x):
        return pixel_shuffle(x, self.r)


class ResidualBlock(nn.Module):
    def __init__(self, channels: int, kernel_size: int = 3):
        super().__init__()
        pad = kernel_size // 2
        self.body = nn.Sequential(
            nn.Conv2d(channels, channels, kernel_size, padding=pad),
            nn.BatchNorm2d(channels),
            nn.PReLU(num_parameters=1),
            nn.Conv2d(channels, channels, kernel_size, padding=pad),
            nn.BatchNorm2d(channels),
        )

    def forward(self, x):
        return x + self.body(x)


class UpsampleBlock(nn.Module):
    """Conv to 4x channels, sub-pixel shuffle by 2, PReLU."""

    def __init__(self, channels: int, kernel_size: int = 3):
        super().__init__()
        self.conv = nn.Conv2d(channels, channels * 4, kernel_size, padding=kernel_size // 2)
        self.shuffle = PixelShuffle(2)
        self.act = nn.PReLU(num_parameters=1)

    def forward(self, x):
        return self.act(self.shuffle(self.conv(x)))


class SRResNet(nn.Module):
    def __init__(self, config: SRResNetConfig):
        super().__init__()
        self.config = config
        f = config.feature_channels
        self.head = nn.Sequential(
            nn.Conv2d(config.in_channels, f, config.head_kernel_size, padding=config.head_kernel_size // 2),
            nn.PReLU(num_parameters=1),
        )
        self.body = nn.Sequential(
            *[ResidualBlock(f, config.body_kernel_size) for _ in range(config.num_residual_blocks)]
        )
        self.post = nn.Sequential(
            nn.Conv2d(f, f, config.body_kernel_size, padding=config.body_kernel_size // 2),
            nn.BatchNorm2d(f),
        )
        self.upsample = nn.Sequential(
            *[UpsampleBlock(f, config.body_kernel_size) for _ in range(config.num_upsample_stages)]
        )
        self.tail = nn.Conv2d(f, config.in_channels, config.head_kernel_size, padding=config.head_kernel_size // 2)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 4:
            raise ValueError(f"expected a batch of shape (m, c, h, w), got {tuple(x.shape)}")
        if x.shape[1] != self.config.in_channels:
            raise ValueError(f"expected {self.config.in_channels} input channels, got {x.shape[1]}")
        if x.shape[2] < 1 or x.shape[3] < 1:
            raise ValueError(f"spatial dims must be >= 1, got {tuple(x.shape)}")
        h = self.head(x)
        b = self.post(self.body(h)) + h
        return self.tail(self.upsample(b))


def build(config: SRResNetConfig, seed: int) -> SRResNet:
    """Construct an SRResNet with deterministic seed-derived initialization.

    Convolutions get He fan-in initialization matched to the 0.25 PReLU
    slope, biases start at zero, batch-norm at scale 1 / shift 0.
    """
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        model = SRResNet(config)
        for m in model.modules():
            if isinstance(m, nn.Conv2d):
                nn.init.kaiming_normal_(m.weight, a=0.25, mode="fan_in", nonlinearity="leaky_relu")
                nn.init.zeros_(m.bias)
            elif isinstance(m, nn.BatchNorm2d):
                nn.init.ones_(m.weight)
                nn.init.zeros_(m.bias)
            elif isinstance(m, nn.PReLU):
                nn.init.constant_(m.weight, 0.25)
    # channels-last layout roughly halves CPU conv time
    return model.to(memory_format=torch.channels_last)


def count_parameters(model: nn.Module) -> int:
    """Number of learnable scalars (BN running statistics are buffers, not counted)."""
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def analytic_parameter_count(config: SRResNetConfig) -> int:
    """Closed-form parameter count for a configuration."""
    f = config.feature_channels
    kh2 = config.head_kernel_size**2
    kb2 = config.body_kernel_size**2
    head = kh2 * config.in_channels * f + f + 1
    per_block = 2 * (kb2 * f * f + f + 2 * f) + 1
    post = kb2 * f * f + f + 2 * f
    per_stage = kb2 * f * (4 * f) + 4 * f + 1
    tail = kh2 * f * config.in_channels + config.in_channels
    return (
        head
        + config.num_residual_blocks * per_block
        + post
        + config.num_upsample_stages * per_stage
        + tail
    )


def save_checkpoint(model: SRResNet, path, seed: int | None = None, iteration: int | None = None) -> None:
    """Write a self-describing checkpoint (format documented in the README)."""
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": asdict(model.config),
        "seed": seed,
        "iteration": iteration,
        "state_dict": model.state_dict(),
    }
    torch.save(payload, path)


def load_checkpoint(path) -> tuple[SRResNet, dict]:
    """Rebuild a model from a checkpoint; returns (model, metadata).

    The restored model reproduces bitwise-identical inference outputs:
    the state dict carries every parameter and batch-norm running statistic.
    """
    payload = torch.load(path, map_location="cpu", weights_only=True)
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format version {version!r}")
    config = SRResNetConfig(**payload["config"])
    model = SRResNet(config)
    model.load_state_dict(payload["state_dict"])
    model = model.to(memory_format=torch.channels_last)
    meta = {"seed": payload.get("seed"), "iteration": payload.get("iteration")}
    return model, meta
