"""Channel knowledge map reconstruction from sparse measurements via super-resolution."""

from .core import (
    ChannelCodec,
    ChannelKind,
    CKMGrid,
    PixelImage,
    decode_image,
    encode_grid,
    get_codec,
    standard_codecs,
)
from .sampling import SamplingSpec, downsample, selection_mask, sr_factor

__all__ = [
    "ChannelCodec",
    "ChannelKind",
    "CKMGrid",
    "PixelImage",
    "SamplingSpec",
    "decode_image",
    "downsample",
    "encode_grid",
    "get_codec",
    "selection_mask",
    "sr_factor",
    "standard_codecs",
]

__version__ = "0.1.0"
