"""Uniform sparse-measurement sampling and the super-resolution factor law.

Measuring a w x h map at every k-th cell in both directions keeps
(w/k) * (h/k) locations, i.e. a 1/k^2 fraction of the grid. The selection
operator is a 0/1 diagonal mask; compacting the selected cells yields the
low-resolution measurement grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import CKMGrid


@dataclass(frozen=True)
class SamplingSpec:
    """Sampling factor k plus the (row, col) phase of the sample lattice."""

    factor: int
    phase: tuple[int, int] = (0, 0)

    def __post_init__(self) -> None:
        if self.factor < 1:
            raise ValueError(f"sampling factor must be >= 1, got {self.factor}")
        pr, pc = self.phase
        if not (0 <= pr < self.factor and 0 <= pc < self.factor):
            raise ValueError(f"phase {self.phase} must lie in [0, {self.factor})")


def _check_divisible(w: int, h: int, k: int) -> None:
    if w % k or h % k:
        raise ValueError(f"sampling factor {k} does not divide grid size {w}x{h}")


def downsample_array(a: np.ndarray, spec: SamplingSpec) -> np.ndarray:
    """Keep every spec.factor-th entry of a 2-D array, starting at the phase."""
    h, w = a.shape[-2], a.shape[-1]
    _check_divisible(w, h, spec.factor)
    pr, pc = spec.phase
    return a[..., pr :: spec.factor, pc :: spec.factor]


def downsample(grid: CKMGrid, spec: SamplingSpec) -> CKMGrid:
    """Uniformly sample a grid down to (h/k) x (w/k); the mask is carried through."""
    return CKMGrid(
        grid.kind,
        downsample_array(grid.values, spec),
        downsample_array(grid.mask, spec),
    )


def selection_mask(w: int, h: int, spec: SamplingSpec) -> np.ndarray:
    """Boolean (h, w) grid, True exactly at the sampled cells."""
    _check_divisible(w, h, spec.factor)
    mask = np.zeros((h, w), dtype=bool)
    pr, pc = spec.phase
    mask[pr :: spec.factor, pc :: spec.factor] = True
    return mask


def sr_factor(w: int, h: int, w_prime: int, h_prime: int) -> int:
    """The integer upscaling factor k = sqrt(w*h / (w'*h')) relating full and sparse grids.

    Rejects shape pairs whose ratio is anisotropic or non-integer.
    """
    for n, label in ((w, "w"), (h, "h"), (w_prime, "w'"), (h_prime, "h'")):
        if n < 1:
            raise ValueError(f"{label} must be a positive integer, got {n}")
    if w % w_prime or h % h_prime or w // w_prime != h // h_prime:
        raise ValueError(
            f"incompatible shapes: {w}x{h} is not an integer isotropic multiple of {w_prime}x{h_prime}"
        )
    k = w // w_prime
    assert k * k * (w_prime * h_prime) == w * h
    assert k == math.isqrt(w * h // (w_prime * h_prime))
    return k
