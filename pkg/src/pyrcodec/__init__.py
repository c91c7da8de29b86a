"""Overfitted image codec with separable, symmetric pyramidal upsampling."""

__version__ = "0.1.0"

from .bdrate import RDCurve, bd_rate
from .bitstream import read_bitstream, write_bitstream
from .decoder import DecoderModel, SynthesisNet, decode_forward, init_model, loss
from .estimator import OverfittedCodec, PyramidUpsampler
from .image import psnr, read_image, write_image
from .kernels import (
    Kernel2D,
    SymmetricKernel1D,
    bicubic_init,
    bilinear_init,
    cutoff_frequency,
    dirac,
    frequency_response,
    macs_nonseparable,
    macs_separable,
)
from .rate import RateModel, rate_bits
from .training import TrainConfig, train
from .upsampler import (
    LegacyUpsamplerParams,
    UpsamplerParams,
    count_macs,
    prefilter,
    synthesize_dense,
    upsample2x,
)

__all__ = [
    "DecoderModel", "Kernel2D", "LegacyUpsamplerParams", "OverfittedCodec", "PyramidUpsampler",
    "RDCurve", "RateModel", "SymmetricKernel1D", "SynthesisNet", "TrainConfig",
    "UpsamplerParams", "bd_rate", "bicubic_init", "bilinear_init", "count_macs",
    "cutoff_frequency", "decode_forward", "dirac", "frequency_response", "init_model", "loss",
    "macs_nonseparable", "macs_separable", "prefilter", "psnr", "rate_bits", "read_bitstream",
    "read_image", "synthesize_dense", "train", "upsample2x", "write_bitstream", "write_image",
]
