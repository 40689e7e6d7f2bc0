"""Grid data model and the pixel <-> physical-value codecs shared by all modules.

A channel knowledge map (CKM) is a rectangular grid of physical channel
values (path loss in dB, or angle of arrival in degrees) plus a boolean
mask marking building cells. Grids store physical values as the source of
truth; the 8-bit grayscale image form is a serialization produced by a
:class:`ChannelCodec`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from PIL import Image


class ChannelKind(enum.Enum):
    """The kind of channel knowledge a grid carries; determines the unit."""

    PATH_LOSS = "path_loss"
    AOA = "aoa"

    @property
    def unit(self) -> str:
        return "dB" if self is ChannelKind.PATH_LOSS else "degrees"


@dataclass(frozen=True)
class ChannelCodec:
    """Affine mapping between physical channel values and 8-bit pixel intensities.

    Pixel 0 maps to ``v_min`` and pixel 255 to ``v_max``. Encoding uses a
    fixed quantization rule: round half up to the nearest integer, then
    clamp to [0, 255]. ``sentinel`` is an optional reserved physical value
    that encodes building cells (it must land inside the codec domain so
    it owns a pixel of its own).
    """

    v_min: float
    v_max: float
    kind: ChannelKind = ChannelKind.PATH_LOSS
    sentinel: float | None = None

    def __post_init__(self) -> None:
        if not np.isfinite(self.v_min) or not np.isfinite(self.v_max):
            raise ValueError("codec endpoints must be finite")
        if not self.v_min < self.v_max:
            raise ValueError(f"codec requires v_min < v_max, got ({self.v_min}, {self.v_max})")
        if self.sentinel is not None and not (self.v_min <= self.sentinel <= self.v_max):
            raise ValueError(f"sentinel {self.sentinel} outside codec domain [{self.v_min}, {self.v_max}]")

    @property
    def span(self) -> float:
        return self.v_max - self.v_min

    @property
    def quantization_step(self) -> float:
        """Physical value covered by one pixel level."""
        return self.span / 255.0

    @property
    def sentinel_pixel(self) -> int | None:
        if self.sentinel is None:
            return None
        return int(self.encode_values(np.asarray(self.sentinel))[()])

    def encode_values(self, values: np.ndarray) -> np.ndarray:
        """Physical values -> uint8 pixels (round half up, clamp to [0, 255])."""
        values = np.asarray(values, dtype=np.float64)
        if not np.isfinite(values).all():
            raise ValueError("cannot encode non-finite channel values")
        scaled = 255.0 * (values - self.v_min) / self.span
        pixels = np.floor(scaled + 0.5)
        return np.clip(pixels, 0, 255).astype(np.uint8)

    def decode_pixels(self, pixels: np.ndarray) -> np.ndarray:
        """uint8 pixels -> physical values (exact affine, no rounding)."""
        p = np.asarray(pixels, dtype=np.float64)
        return self.v_min + (p / 255.0) * self.span


def _frozen_array(a: np.ndarray, dtype) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class PixelImage:
    """An 8-bit single-channel image, shape (height, width)."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        p = np.asarray(self.pixels)
        if p.ndim != 2:
            raise ValueError(f"pixel image must be 2-D, got shape {p.shape}")
        if p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError(f"pixel image must be at least 1x1, got shape {p.shape}")
        if p.dtype != np.uint8:
            if not (np.issubdtype(p.dtype, np.integer) and p.min() >= 0 and p.max() <= 255):
                raise ValueError("pixel values must be integers in [0, 255]")
        object.__setattr__(self, "pixels", _frozen_array(p, np.uint8))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def save_png(self, path) -> None:
        Image.fromarray(self.pixels, mode="L").save(path, format="PNG")

    @classmethod
    def load_png(cls, path) -> "PixelImage":
        with Image.open(path) as im:
            return cls(np.asarray(im.convert("L"), dtype=np.uint8))


@dataclass(frozen=True)
class CKMGrid:
    """A grid of physical channel values of one kind, with a building mask.

    ``values`` has shape (height, width); ``mask`` is True at building /
    invalid cells. Masked cells still carry a finite placeholder value so
    that image-domain processing treats the whole grid uniformly.
    """

    kind: ChannelKind
    values: np.ndarray
    mask: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"grid values must be 2-D, got shape {v.shape}")
        if v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError(f"grid must be at least 1x1, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise ValueError("grid values must be finite")
        m = self.mask
        if m is None:
            m = np.zeros(v.shape, dtype=bool)
        else:
            m = np.asarray(m, dtype=bool)
            if m.shape != v.shape:
                raise ValueError(f"mask shape {m.shape} does not match values shape {v.shape}")
        object.__setattr__(self, "values", _frozen_array(v, np.float64))
        object.__setattr__(self, "mask", _frozen_array(m, bool))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def with_values(self, values: np.ndarray, mask: np.ndarray | None = None) -> "CKMGrid":
        """New grid of the same kind with replaced values (and optionally mask)."""
        return CKMGrid(self.kind, values, self.mask if mask is None else mask)


def encode_grid(grid: CKMGrid, codec: ChannelCodec) -> PixelImage:
    """Serialize a grid to its 8-bit image form.

    Masked cells encode to the codec's sentinel pixel when a sentinel is
    defined; otherwise they encode their stored value like any other cell.
    """
    if grid.kind is not codec.kind:
        raise ValueError(f"grid kind {grid.kind.value} does not match codec kind {codec.kind.value}")
    pixels = codec.encode_values(grid.values)
    if codec.sentinel is not None and grid.mask.any():
        pixels = pixels.copy()
        pixels[grid.mask] = codec.sentinel_pixel
    return PixelImage(pixels)


def decode_image(img: PixelImage, codec: ChannelCodec) -> CKMGrid:
    """Deserialize an 8-bit image to a physical grid.

    Pixels equal to the codec's sentinel pixel (when defined) set the mask.
    """
    values = codec.decode_pixels(img.pixels)
    mask = None
    if codec.sentinel_pixel is not None:
        mask = img.pixels == codec.sentinel_pixel
    return CKMGrid(codec.kind, values, mask)


_STANDARD_CODECS = {
    "radiomapseer_pathloss": ChannelCodec(-147.0, -47.0, ChannelKind.PATH_LOSS),
    "ckmimagenet_pathloss": ChannelCodec(-250.0, -50.0, ChannelKind.PATH_LOSS),
    "ckmimagenet_aoa": ChannelCodec(-200.0, 180.0, ChannelKind.AOA, sentinel=-200.0),
}


def standard_codecs() -> dict[str, ChannelCodec]:
    """The named codecs of the two public dataset families.

    The AoA codec maps [-200, 180] degrees to [0, 255] so that the -200
    degree building sentinel lands exactly on pixel 0; real bearings only
    occupy (-180, 180].
    """
    return dict(_STANDARD_CODECS)


def get_codec(name: str) -> ChannelCodec:
    try:
        return _STANDARD_CODECS[name]
    except KeyError:
        known = ", ".join(sorted(_STANDARD_CODECS))
        raise KeyError(f"unknown codec '{name}' (available: {known})") from None
