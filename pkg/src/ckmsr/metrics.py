"""Evaluation metrics: pixel MSE, PSNR, SSIM, and physical-unit RMSE.

Pixel metrics operate on 8-bit images; physical RMSE operates on decoded
grids in dB or degrees. Aggregation is per-image first, then an
arithmetic mean over images (so the aggregate PSNR is the mean of
per-image PSNRs, not the PSNR of the mean MSE).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import ChannelCodec, CKMGrid, encode_grid, PixelImage

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = (0.01 * 255.0) ** 2
SSIM_C2 = (0.03 * 255.0) ** 2


def _pixel_array(img) -> np.ndarray:
    a = img.pixels if isinstance(img, PixelImage) else np.asarray(img)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {a.shape}")
    return a.astype(np.float64)


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"image dimensions differ: {a.shape} vs {b.shape}")


def mse_pixel(a, b) -> float:
    """Mean squared intensity difference over all pixels."""
    x, y = _pixel_array(a), _pixel_array(b)
    _check_same_shape(x, y)
    return float(np.mean((x - y) ** 2))


def psnr(a, b) -> float:
    """10*log10(255^2 / MSE) in dB; +inf for identical images."""
    mse = mse_pixel(a, b)
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0**2 / mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """2-D Gaussian weighting window normalized to sum 1."""
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(offsets**2) / (2.0 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(a, b) -> float:
    """Mean local structural similarity with an 11x11 Gaussian window (sigma 1.5).

    Windows are taken over the valid region only (no padding), with the
    standard stabilizers C1 = (0.01*255)^2 and C2 = (0.03*255)^2 for 8-bit
    intensities.
    """
    x, y = _pixel_array(a), _pixel_array(b)
    _check_same_shape(x, y)
    if x.shape[0] < SSIM_WINDOW or x.shape[1] < SSIM_WINDOW:
        raise ValueError(f"image {x.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    w = gaussian_window()
    shape = (SSIM_WINDOW, SSIM_WINDOW)
    xw = sliding_window_view(x, shape)
    yw = sliding_window_view(y, shape)
    mu_x = np.einsum("ijkl,kl->ij", xw, w)
    mu_y = np.einsum("ijkl,kl->ij", yw, w)
    xx = np.einsum("ijkl,ijkl,kl->ij", xw, xw, w)
    yy = np.einsum("ijkl,ijkl,kl->ij", yw, yw, w)
    xy = np.einsum("ijkl,ijkl,kl->ij", xw, yw, w)
    var_x = xx - mu_x * mu_x
    var_y = yy - mu_y * mu_y
    cov = xy - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (var_x + var_y + SSIM_C2)
    return float(np.mean(num / den))


def rmse_physical(a: CKMGrid, b: CKMGrid, mask_buildings: bool = False) -> float:
    """Root mean squared difference in physical units (dB or degrees).

    With ``mask_buildings``, cells masked in the ground truth ``b`` are
    excluded from the mean.
    """
    if a.kind is not b.kind:
        raise ValueError(f"channel kinds differ: {a.kind.value} vs {b.kind.value}")
    _check_same_shape(a.values, b.values)
    diff = a.values - b.values
    if mask_buildings:
        include = ~b.mask
        if not include.any():
            raise ValueError("no cells left after masking buildings")
        diff = diff[include]
    return float(np.sqrt(np.mean(diff**2)))


@dataclass(frozen=True)
class MetricsRecord:
    image_id: str
    psnr: float
    ssim: float
    mse_pixel: float
    rmse_physical: float


@dataclass(frozen=True)
class MetricsReport:
    records: tuple[MetricsRecord, ...]

    def __post_init__(self) -> None:
        if not self.records:
            raise ValueError("a metrics report needs at least one record")
        object.__setattr__(self, "records", tuple(self.records))

    @property
    def psnr_infinite_count(self) -> int:
        return sum(1 for r in self.records if math.isinf(r.psnr))

    @property
    def mean_psnr(self) -> float:
        """Mean over per-image PSNRs, excluding infinite (identical-image) records."""
        finite = [r.psnr for r in self.records if math.isfinite(r.psnr)]
        if not finite:
            return math.inf
        return float(np.mean(finite))

    @property
    def mean_ssim(self) -> float:
        return float(np.mean([r.ssim for r in self.records]))

    @property
    def mean_mse_pixel(self) -> float:
        return float(np.mean([r.mse_pixel for r in self.records]))

    @property
    def mean_rmse_physical(self) -> float:
        return float(np.mean([r.rmse_physical for r in self.records]))


def evaluate(
    pairs: list[tuple[CKMGrid, CKMGrid]],
    codec: ChannelCodec,
    ids: list[str] | None = None,
    mask_buildings: bool = False,
) -> MetricsReport:
    """Per-image metrics for (reconstructed, truth) grid pairs, plus aggregates.

    Pixel metrics are computed on the codec-encoded 8-bit forms; physical
    RMSE on the raw grids.
    """
    if not pairs:
        raise ValueError("cannot evaluate an empty list of image pairs")
    if ids is not None and len(ids) != len(pairs):
        raise ValueError("ids must match pairs one-to-one")
    records = []
    for i, (recon, truth) in enumerate(pairs):
        rp = encode_grid(recon, codec)
        tp = encode_grid(truth, codec)
        records.append(
            MetricsRecord(
                image_id=ids[i] if ids is not None else str(i),
                psnr=psnr(rp, tp),
                ssim=ssim(rp, tp),
                mse_pixel=mse_pixel(rp, tp),
                rmse_physical=rmse_physical(recon, truth, mask_buildings=mask_buildings),
            )
        )
    return MetricsReport(tuple(records))


REPORT_COLUMNS = ("method", "PSNR", "SSIM", "MSE(pixel)", "RMSE")


def report_rows(reports: dict[str, MetricsReport]) -> list[dict[str, object]]:
    return [
        {
            "method": method,
            "PSNR": rep.mean_psnr,
            "SSIM": rep.mean_ssim,
            "MSE(pixel)": rep.mean_mse_pixel,
            "RMSE": rep.mean_rmse_physical,
        }
        for method, rep in reports.items()
    ]


def write_report_csv(reports: dict[str, MetricsReport], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        writer.writeheader()
        for row in report_rows(reports):
            writer.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in row.items()})


def format_report_table(reports: dict[str, MetricsReport], header: str | None = None) -> str:
    """Aligned text table with one aggregate row per method."""
    rows = report_rows(reports)
    cells = [[str(r["method"])] + [f"{r[c]:.4f}" for c in REPORT_COLUMNS[1:]] for r in rows]
    widths = [max(len(REPORT_COLUMNS[i]), *(len(row[i]) for row in cells)) for i in range(len(REPORT_COLUMNS))]
    lines = []
    if header:
        lines.append(header)
    lines.append("  ".join(c.ljust(widths[i]) for i, c in enumerate(REPORT_COLUMNS)))
    lines.append("  ".join("-" * w for w in widths))
    for row in cells:
        lines.append("  ".join(c.ljust(widths[i]) for i, c in enumerate(row)))
    return "\n".join(lines) + "\n"
