"""Bitstream serialization of a trained :class:`DecoderModel`.

Layout (little-endian)::

    "PUPS" u8 version
    u32 W, u32 H, u8 L, u8 n_L, u8 K_L, u8 n_H, u8 K_H
    u8 hidden-layer count, u16 width per hidden layer
    u16 Laplace scale per level (Q8.8)
    u32 parameter bytes, u32 latent bytes
    parameter payload, latent payload

Bit 7 of the K_L byte flags the legacy non-separable upsampler, whose
K_L x K_L taps are then stored instead of the symmetric half taps.

Parameter payload: L-kernel taps, then H-kernel taps (int16, Q4.12), then
for each synthesis layer an int8 exponent ``e`` and the weights as int16
codes worth ``code * 2**(e - 8)``, followed by the biases in the same form.

Latent payload: one range-coded stream, levels in order, row-major, each
value coded under its level's quantized Laplace table. Values beyond the
escape threshold are sent as the escape symbol plus a raw 16-bit
two's-complement value.
"""

from __future__ import annotations

import io
import math
import os
import struct

import numpy as np

from .decoder import DecoderModel, SynthesisNet
from .kernels import Kernel2D, SymmetricKernel1D, n_free_taps
from .rangecoder import RangeDecoder, RangeEncoder, laplace_table
from .rate import RateModel, rate_bits
from .upsampler import LegacyUpsamplerParams, UpsamplerParams, level_shapes

MAGIC = b"PUPS"
VERSION = 1
LEGACY_FLAG = 0x80
TAP_FRAC_BITS = 12
WEIGHT_FRAC_BITS = 8
SCALE_FRAC_BITS = 8
LATENT_MIN, LATENT_MAX = -(1 << 15), (1 << 15) - 1


class BitstreamError(ValueError):
    pass


class CorruptHeaderError(BitstreamError):
    pass


class VersionError(BitstreamError):
    pass


class PayloadLengthError(BitstreamError):
    pass


# ---------------------------------------------------------------------------
# Fixed point


def quantize_taps(taps) -> np.ndarray:
    """Q4.12 codes, saturating at the int16 range."""
    taps = np.asarray(taps, dtype=np.float64)
    if not np.all(np.isfinite(taps)):
        raise ValueError("non-finite kernel tap")
    return np.clip(np.round(taps * (1 << TAP_FRAC_BITS)), LATENT_MIN, LATENT_MAX).astype("<i2")


def dequantize_taps(codes) -> np.ndarray:
    return np.asarray(codes, dtype=np.float64) / (1 << TAP_FRAC_BITS)


def weight_exponent(values) -> int:
    """Smallest exponent whose Q8.8 grid, scaled by ``2**e``, holds every value."""
    peak = float(np.max(np.abs(values))) if np.size(values) else 0.0
    if peak == 0.0:
        return 0
    e = math.ceil(math.log2(peak * (1 << WEIGHT_FRAC_BITS) / LATENT_MAX))
    while peak * 2.0 ** (WEIGHT_FRAC_BITS - e) > LATENT_MAX:
        e += 1
    return max(-128, min(127, e))


def quantize_weights(values) -> tuple[int, np.ndarray]:
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValueError("non-finite synthesis parameter")
    e = weight_exponent(values)
    codes = np.clip(np.round(values * 2.0 ** (WEIGHT_FRAC_BITS - e)), LATENT_MIN, LATENT_MAX)
    return e, codes.astype("<i2")


def dequantize_weights(e: int, codes) -> np.ndarray:
    return np.asarray(codes, dtype=np.float64) * 2.0 ** (e - WEIGHT_FRAC_BITS)


def quantize_scales(scales) -> np.ndarray:
    codes = np.round(np.asarray(scales, dtype=np.float64) * (1 << SCALE_FRAC_BITS))
    return np.clip(codes, 1, 0xFFFF).astype("<u2")


def dequantize_scales(codes) -> np.ndarray:
    return np.asarray(codes, dtype=np.float64) / (1 << SCALE_FRAC_BITS)


# ---------------------------------------------------------------------------
# Latents


def _check_integer_pyramid(pyramid) -> list[np.ndarray]:
    if len(pyramid) == 0:
        raise ValueError("pyramid must have at least one level")
    out = []
    for n, p in enumerate(pyramid):
        p = np.asarray(p, dtype=np.float64)
        if not np.all(np.isfinite(p)) or np.any(p != np.round(p)):
            raise ValueError(f"latent level {n} is not integer-valued")
        if p.size and (p.min() < LATENT_MIN or p.max() > LATENT_MAX):
            raise ValueError(f"latent level {n} exceeds the 16-bit range")
        out.append(p.astype(np.int64))
    return out


def encode_latents(pyramid, scales) -> bytes:
    """Range-code integer latents; ``scales`` are the per-level Laplace scales."""
    levels = _check_integer_pyramid(pyramid)
    scales = np.asarray(scales, dtype=np.float64).reshape(-1)
    if scales.size != len(levels):
        raise ValueError(f"{len(levels)} levels but {scales.size} scales")
    enc = RangeEncoder()
    for values, b in zip(levels, scales):
        table, t = laplace_table(float(b))
        escape = len(table) - 1
        for v in values.ravel().tolist():
            if -t <= v <= t:
                table.encode(enc, v + t)
            else:
                table.encode(enc, escape)
                enc.encode_raw(v & 0xFFFF, 16)
    return enc.finish()


def decode_latents(data: bytes, shapes, scales) -> list[np.ndarray]:
    dec = RangeDecoder(data)
    out = []
    for shape, b in zip(shapes, np.asarray(scales, dtype=np.float64).reshape(-1)):
        table, t = laplace_table(float(b))
        escape = len(table) - 1
        values = np.empty(int(np.prod(shape)), dtype=np.float64)
        for i in range(values.size):
            s = table.decode(dec)
            if s == escape:
                raw = dec.decode_raw(16)
                values[i] = raw - (1 << 16) if raw >= 1 << 15 else raw
            else:
                values[i] = s - t
        out.append(values.reshape(shape))
    return out


def ideal_latent_bits(pyramid, scales) -> float:
    """Code length of the latents under the continuous Laplace model."""
    return rate_bits(pyramid, RateModel.from_scales(scales))


# ---------------------------------------------------------------------------
# Parameters


def encode_parameters(model: DecoderModel) -> bytes:
    buf = io.BytesIO()
    up = model.upsampler
    if isinstance(up, LegacyUpsamplerParams):
        buf.write(quantize_taps(up.kernel.taps).tobytes())
    else:
        for k in up.l_kernels + up.h_kernels:
            buf.write(quantize_taps(k.half_taps).tobytes())
    for w, b in zip(model.synthesis.weights, model.synthesis.biases):
        for values in (w, b):
            e, codes = quantize_weights(values)
            buf.write(struct.pack("<b", e))
            buf.write(codes.tobytes())
    return buf.getvalue()


def _read(buf: io.BytesIO, n: int) -> bytes:
    data = buf.read(n)
    if len(data) != n:
        raise PayloadLengthError(f"parameter payload ended early ({len(data)} of {n} bytes)")
    return data


def _read_i16(buf, count: int) -> np.ndarray:
    return np.frombuffer(_read(buf, 2 * count), dtype="<i2")


def decode_parameters(data: bytes, geometry: dict):
    """Return ``(upsampler, synthesis)`` from a parameter payload."""
    buf = io.BytesIO(data)
    levels, k_l, n_l = geometry["levels"], geometry["k_l"], geometry["n_l"]
    if geometry["legacy"]:
        taps = dequantize_taps(_read_i16(buf, k_l * k_l)).reshape(k_l, k_l)
        upsampler = LegacyUpsamplerParams(levels, Kernel2D(k_l, taps))
    else:
        k_h, n_h = geometry["k_h"], geometry["n_h"]
        l_kernels = [SymmetricKernel1D(k_l, dequantize_taps(_read_i16(buf, n_free_taps(k_l))))
                     for _ in range(n_l)]
        h_kernels = [SymmetricKernel1D(k_h, dequantize_taps(_read_i16(buf, n_free_taps(k_h))))
                     for _ in range(n_h)]
        upsampler = UpsamplerParams(levels, l_kernels, h_kernels)
    widths = [levels, *geometry["hidden"], 3]
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        (e,) = struct.unpack("<b", _read(buf, 1))
        weights.append(dequantize_weights(e, _read_i16(buf, fan_in * fan_out)).reshape(fan_in, fan_out))
        (e,) = struct.unpack("<b", _read(buf, 1))
        biases.append(dequantize_weights(e, _read_i16(buf, fan_out)))
    if buf.read(1):
        raise PayloadLengthError("trailing bytes in parameter payload")
    return upsampler, SynthesisNet(weights, biases)


def _geometry(model: DecoderModel) -> dict:
    up = model.upsampler
    legacy = isinstance(up, LegacyUpsamplerParams)
    return {
        "width": model.width, "height": model.height, "levels": model.levels,
        "legacy": legacy,
        "n_l": 1 if legacy else up.n_l, "k_l": up.k_l,
        "n_h": 0 if legacy else up.n_h, "k_h": 0 if legacy else up.k_h,
        "hidden": list(model.synthesis.hidden),
    }


def quantize_model(model: DecoderModel) -> DecoderModel:
    """The model exactly as a decoder will reconstruct it from the bitstream."""
    geometry = _geometry(model)
    upsampler, synthesis = decode_parameters(encode_parameters(model), geometry)
    scales = dequantize_scales(quantize_scales(model.rate.scales))
    latents = [np.round(p) for p in model.latents]
    return DecoderModel(latents, upsampler, synthesis, RateModel.from_scales(scales))


# ---------------------------------------------------------------------------
# Files


def _header(geometry: dict, scale_codes, param_bytes: int, latent_bytes: int) -> bytes:
    k_l = geometry["k_l"] | (LEGACY_FLAG if geometry["legacy"] else 0)
    hidden = geometry["hidden"]
    head = MAGIC + struct.pack("<BIIBBBBBB", VERSION, geometry["width"], geometry["height"],
                               geometry["levels"], geometry["n_l"], k_l, geometry["n_h"],
                               geometry["k_h"], len(hidden))
    head += struct.pack(f"<{len(hidden)}H", *hidden)
    head += struct.pack(f"<{len(scale_codes)}H", *[int(c) for c in scale_codes])
    return head + struct.pack("<II", param_bytes, latent_bytes)


def encode_bitstream(model: DecoderModel) -> bytes:
    latents = _check_integer_pyramid(model.latents)
    model.check()
    scale_codes = quantize_scales(model.rate.scales)
    params = encode_parameters(model)
    payload = encode_latents(latents, dequantize_scales(scale_codes))
    return _header(_geometry(model), scale_codes, len(params), len(payload)) + params + payload


def parse_header(data: bytes) -> tuple[dict, int]:
    """Return the header fields and the offset of the parameter payload."""
    buf = io.BytesIO(data)

    def take(fmt):
        size = struct.calcsize(fmt)
        chunk = buf.read(size)
        if len(chunk) != size:
            raise CorruptHeaderError("bitstream header is truncated")
        return struct.unpack(fmt, chunk)

    if buf.read(4) != MAGIC:
        raise CorruptHeaderError("bad magic, not a PUPS bitstream")
    (version,) = take("<B")
    if version != VERSION:
        raise VersionError(f"unsupported bitstream version {version}")
    width, height, levels, n_l, k_l, n_h, k_h, n_hidden = take("<IIBBBBBB")
    hidden = list(take(f"<{n_hidden}H"))
    scale_codes = np.array(take(f"<{levels}H"), dtype=np.uint16)
    param_bytes, latent_bytes = take("<II")
    legacy = bool(k_l & LEGACY_FLAG)
    k_l &= ~LEGACY_FLAG
    if width < 1 or height < 1 or not 1 <= levels <= 7 or not 1 <= n_l <= levels \
            or n_h > levels or k_l < 2 or (n_h and k_h % 2 == 0) or 0 in hidden \
            or np.any(scale_codes == 0):
        raise CorruptHeaderError("inconsistent header fields")
    header = {"version": version, "width": width, "height": height, "levels": levels,
              "legacy": legacy, "n_l": n_l, "k_l": k_l, "n_h": n_h, "k_h": k_h,
              "hidden": hidden, "scale_codes": scale_codes,
              "param_bytes": param_bytes, "latent_bytes": latent_bytes}
    return header, buf.tell()


def decode_bitstream(data: bytes) -> DecoderModel:
    header, offset = parse_header(data)
    expected = offset + header["param_bytes"] + header["latent_bytes"]
    if len(data) != expected:
        raise PayloadLengthError(f"bitstream has {len(data)} bytes, header declares {expected}")
    params = data[offset:offset + header["param_bytes"]]
    payload = data[offset + header["param_bytes"]:expected]
    upsampler, synthesis = decode_parameters(params, header)
    scales = dequantize_scales(header["scale_codes"])
    shapes = level_shapes(header["height"], header["width"], header["levels"])
    latents = decode_latents(payload, shapes, scales)
    return DecoderModel(latents, upsampler, synthesis, RateModel.from_scales(scales))


def write_bitstream(model: DecoderModel, path: str | os.PathLike) -> dict:
    """Write ``model`` to ``path`` and report its size; bpp counts the whole file."""
    data = encode_bitstream(model)
    with open(path, "wb") as f:
        f.write(data)
    header, offset = parse_header(data)
    return {
        "bytes": len(data),
        "header_bytes": offset,
        "param_bytes": header["param_bytes"],
        "latent_bytes": header["latent_bytes"],
        "bpp": len(data) * 8 / (model.width * model.height),
    }


def read_bitstream(path: str | os.PathLike) -> DecoderModel:
    with open(path, "rb") as f:
        return decode_bitstream(f.read())
