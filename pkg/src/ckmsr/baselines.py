"""Nearest-neighbour and bicubic upsampling baselines, implemented from scratch.

Bicubic follows the classical cubic-convolution scheme with kernel
parameter a = -0.5 and the half-pixel-center coordinate convention
(source coordinate u = (i + 0.5) / k - 0.5), with replicate-edge padding.
Reported baseline numbers depend on these conventions, so they are fixed
here rather than left to a library default.
"""

from __future__ import annotations

import enum

import numpy as np

from .core import CKMGrid

DEFAULT_KERNEL_A = -0.5


class UpsampleMethod(enum.Enum):
    NEAREST = "nearest"
    BICUBIC = "bicubic"


def nn_upsample_array(a: np.ndarray, k: int) -> np.ndarray:
    """Replicate every entry of a 2-D array into a k x k block."""
    if k < 1:
        raise ValueError(f"upsampling factor must be >= 1, got {k}")
    return np.repeat(np.repeat(a, k, axis=0), k, axis=1)


def nn_upsample(grid: CKMGrid, k: int) -> CKMGrid:
    return CKMGrid(grid.kind, nn_upsample_array(grid.values, k), nn_upsample_array(grid.mask, k))


def cubic_kernel(x: np.ndarray, a: float = DEFAULT_KERNEL_A) -> np.ndarray:
    """Cubic convolution kernel with parameter a; support (-2, 2), W(0) = 1.

    W(x) = (a+2)|x|^3 - (a+3)|x|^2 + 1          for |x| <= 1
         = a|x|^3 - 5a|x|^2 + 8a|x| - 4a        for 1 < |x| < 2
         = 0                                    otherwise
    """
    x = np.abs(np.asarray(x, dtype=np.float64))
    x2 = x * x
    x3 = x2 * x
    near = (a + 2.0) * x3 - (a + 3.0) * x2 + 1.0
    far = a * x3 - 5.0 * a * x2 + 8.0 * a * x - 4.0 * a
    return np.where(x <= 1.0, near, np.where(x < 2.0, far, 0.0))


def _axis_taps(n_in: int, k: int, a: float) -> tuple[np.ndarray, np.ndarray]:
    """Source indices (4, n_in*k) and kernel weights for one axis.

    Output coordinate i samples the source at u = (i + 0.5)/k - 0.5; the four
    taps sit at floor(u) - 1 .. floor(u) + 2, clipped to the edges.
    """
    u = (np.arange(n_in * k, dtype=np.float64) + 0.5) / k - 0.5
    base = np.floor(u).astype(np.int64)
    t = u - base
    offsets = np.array([-1, 0, 1, 2])[:, None]
    idx = np.clip(base[None, :] + offsets, 0, n_in - 1)
    weights = cubic_kernel(t[None, :] - offsets, a)
    return idx, weights


def bicubic_upsample_array(a2d: np.ndarray, k: int, a: float = DEFAULT_KERNEL_A) -> np.ndarray:
    """Cubic-convolution upsampling of a 2-D array by an integer factor (unclamped)."""
    if k < 1:
        raise ValueError(f"upsampling factor must be >= 1, got {k}")
    if not np.isfinite(a):
        raise ValueError("kernel parameter must be finite")
    src = np.asarray(a2d, dtype=np.float64)
    if k == 1:
        return src.copy()
    h, w = src.shape
    ridx, rw = _axis_taps(h, k, a)
    rows = np.einsum("tow,to->ow", src[ridx, :], rw)
    cidx, cw = _axis_taps(w, k, a)
    return np.einsum("hto,to->ho", rows[:, cidx], cw)


def bicubic_upsample(
    grid: CKMGrid,
    k: int,
    a: float = DEFAULT_KERNEL_A,
    domain: tuple[float, float] | None = None,
) -> CKMGrid:
    """Bicubic upsampling of a grid; overshoot is clamped to ``domain`` when given.

    Masked cells participate through their stored values (no special
    treatment); the output mask is the block-replicated input mask.
    """
    values = bicubic_upsample_array(grid.values, k, a)
    if domain is not None:
        values = np.clip(values, domain[0], domain[1])
    return CKMGrid(grid.kind, values, nn_upsample_array(grid.mask, k))


def upsample(
    grid: CKMGrid,
    k: int,
    method: UpsampleMethod,
    a: float = DEFAULT_KERNEL_A,
    domain: tuple[float, float] | None = None,
) -> CKMGrid:
    """Dispatch to the named baseline upsampler."""
    if method is UpsampleMethod.NEAREST:
        return nn_upsample(grid, k)
    return bicubic_upsample(grid, k, a=a, domain=domain)
