"""Supervised training of the generator on high-resolution CKM image stacks.

Each iteration draws a batch of HR images, forms the sparse input on the
fly by uniform sampling at phase (0, 0), and takes one optimizer step on
the mean-squared error in normalized [0, 1] intensity space. Epochs are
shuffled partitions: every image is visited at most once per epoch, with
N = floor(D / m) iterations per epoch and E = floor(T / N) epochs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import torch

from .core import ChannelCodec, CKMGrid, encode_grid
from .model import SRResNet, save_checkpoint
from .sampling import SamplingSpec, downsample_array

OPTIMIZERS = ("adam", "sgd")


@dataclass(frozen=True)
class TrainConfig:
    factor: int
    batch_size: int = 32
    iterations: int = 100_000
    learning_rate: float = 1e-3
    seed: int = 0
    checkpoint_interval: int = 0  # 0 = final checkpoint only
    optimizer: str = "adam"
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8

    def __post_init__(self) -> None:
        if self.factor < 1:
            raise ValueError(f"factor must be >= 1, got {self.factor}")
        if self.batch_size < 1:
            raise ValueError(f"batch size must be >= 1, got {self.batch_size}")
        if self.iterations < 1:
            raise ValueError(f"iteration budget must be >= 1, got {self.iterations}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning rate must be positive, got {self.learning_rate}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")


@dataclass(frozen=True)
class TrainSchedule:
    """Epoch accounting: N = floor(D/m) iterations per epoch, E = floor(T/N) epochs."""

    dataset_size: int
    batch_size: int
    iterations_per_epoch: int
    epochs: int

    @classmethod
    def compute(cls, dataset_size: int, batch_size: int, total_iterations: int) -> "TrainSchedule":
        if dataset_size < 1:
            raise ValueError("training set is empty")
        n = dataset_size // batch_size
        if n < 1:
            raise ValueError(
                f"batch size {batch_size} exceeds dataset size {dataset_size}: no full batch per epoch"
            )
        e = total_iterations // n
        if e < 1:
            raise ValueError(
                f"iteration budget {total_iterations} is below one epoch ({n} iterations): no iterations would run"
            )
        return cls(dataset_size, batch_size, n, e)

    @property
    def total_updates(self) -> int:
        return self.epochs * self.iterations_per_epoch


@dataclass
class TrainResult:
    schedule: TrainSchedule
    history: list[tuple[int, int, float]] = field(default_factory=list)  # (iteration, epoch, loss)

    @property
    def losses(self) -> list[float]:
        return [loss for _, _, loss in self.history]


def mse_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean squared difference per element (per-pixel, per-channel, batch-averaged)."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    return ((pred - target) ** 2).mean()


def epoch_batches(rng: np.random.Generator, dataset_size: int, schedule: TrainSchedule) -> list[np.ndarray]:
    """One epoch's batch index sets: a shuffled partition, no image twice."""
    order = rng.permutation(dataset_size)
    m = schedule.batch_size
    return [order[n * m : (n + 1) * m] for n in range(schedule.iterations_per_epoch)]


def _as_normalized_stack(hr_images: np.ndarray) -> torch.Tensor:
    """(D, h, w) uint8 or [0,1] float stack -> (D, 1, h, w) float32 tensor."""
    a = np.asarray(hr_images)
    if a.ndim != 3:
        raise ValueError(f"expected a (D, h, w) image stack, got shape {a.shape}")
    if a.dtype == np.uint8:
        a = a.astype(np.float32) / 255.0
    else:
        a = a.astype(np.float32)
        if a.size and (a.min() < 0.0 or a.max() > 1.0):
            raise ValueError("float image stacks must be normalized to [0, 1]")
    return torch.from_numpy(a).unsqueeze(1)


def train(
    model: SRResNet,
    hr_images: np.ndarray,
    cfg: TrainConfig,
    loss_log_path=None,
    checkpoint_path=None,
) -> TrainResult:
    """Run the epoch/iteration schedule on a stack of HR images.

    ``hr_images`` is a (D, h, w) stack, uint8 or [0, 1] floats; sparse
    inputs are sampled from it on the fly with the configured factor.
    Appends (iteration, epoch, loss) to the history every iteration; writes
    a checkpoint every ``checkpoint_interval`` iterations (and at the end)
    when ``checkpoint_path`` is given.
    """
    data = _as_normalized_stack(hr_images)
    d, _, h, w = data.shape
    if h % cfg.factor or w % cfg.factor:
        raise ValueError(f"factor {cfg.factor} does not divide image size {w}x{h}")
    if model.config.upscale_factor != cfg.factor:
        raise ValueError(
            f"model upscale factor {model.config.upscale_factor} != training factor {cfg.factor}"
        )

    schedule = TrainSchedule.compute(d, cfg.batch_size, cfg.iterations)
    rng = np.random.default_rng(cfg.seed)
    spec = SamplingSpec(cfg.factor)

    if cfg.optimizer == "adam":
        optimizer = torch.optim.Adam(
            model.parameters(), lr=cfg.learning_rate, betas=cfg.adam_betas, eps=cfg.adam_eps
        )
    else:
        optimizer = torch.optim.SGD(model.parameters(), lr=cfg.learning_rate)

    result = TrainResult(schedule)
    replicate = model.config.in_channels
    model.train()
    iteration = 0
    for epoch in range(1, schedule.epochs + 1):
        for idx in epoch_batches(rng, d, schedule):
            x = data[idx]
            y = downsample_array(x, spec)
            if replicate > 1:
                x = x.expand(-1, replicate, -1, -1)
                y = y.expand(-1, replicate, -1, -1)
            x = x.contiguous(memory_format=torch.channels_last)
            y = y.contiguous(memory_format=torch.channels_last)

            optimizer.zero_grad()
            loss = mse_loss(model(y), x)
            loss.backward()
            optimizer.step()
            iteration += 1

            value = loss.item()
            if not np.isfinite(value):
                raise RuntimeError(
                    f"non-finite loss {value} at iteration {iteration} (epoch {epoch}); "
                    "lower the learning rate or check the input data"
                )
            result.history.append((iteration, epoch, value))
            if (
                checkpoint_path is not None
                and cfg.checkpoint_interval > 0
                and iteration % cfg.checkpoint_interval == 0
            ):
                save_checkpoint(model, checkpoint_path, seed=cfg.seed, iteration=iteration)

    if checkpoint_path is not None:
        save_checkpoint(model, checkpoint_path, seed=cfg.seed, iteration=iteration)
    if loss_log_path is not None:
        write_loss_log(result.history, loss_log_path)
    return result


def write_loss_log(history: list[tuple[int, int, float]], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "epoch", "loss"])
        for iteration, epoch, loss in history:
            writer.writerow([iteration, epoch, repr(loss)])


def infer(model: SRResNet, sparse: CKMGrid, codec: ChannelCodec) -> CKMGrid:
    """Reconstruct a full-resolution grid from a sparse measurement grid.

    Encodes to normalized intensities, runs the generator, clamps to
    [0, 1], and decodes back to physical units. Grayscale grids are
    replicated across input channels for 3-channel models and averaged
    back on output.
    """
    pixels = encode_grid(sparse, codec).pixels
    x = torch.from_numpy(pixels.astype(np.float32) / 255.0)[None, None]
    if model.config.in_channels > 1:
        x = x.expand(-1, model.config.in_channels, -1, -1)
    x = x.contiguous(memory_format=torch.channels_last)
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            out = model(x)
    finally:
        model.train(was_training)
    out = out.mean(dim=1, keepdim=True).clamp_(0.0, 1.0)
    intensities = out[0, 0].numpy().astype(np.float64)
    values = codec.v_min + intensities * codec.span
    return CKMGrid(codec.kind, values)
