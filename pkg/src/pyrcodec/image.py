"""RGB images as float arrays in [0, 1], binary PPM (P6) I/O and PSNR."""

from __future__ import annotations

import os

import numpy as np

PSNR_CAP = 999.0


class PPMError(ValueError):
    """Base class for PPM decoding failures."""


class MalformedHeaderError(PPMError):
    pass


class TruncatedPayloadError(PPMError):
    pass


class UnsupportedMaxvalError(PPMError):
    pass


def check_image(img, name="image") -> np.ndarray:
    """Validate an RGB image and return it as a float64 array of shape (H, W, 3)."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"{name} must have shape (H, W, 3), got {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be at least 1x1, got {arr.shape[:2]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite samples")
    return arr


def _header_tokens(data: bytes):
    # yields (token, end_offset) for the four header fields, skipping '#' comments
    pos = 0
    n = len(data)
    for _ in range(4):
        while pos < n:
            c = data[pos:pos + 1]
            if c == b"#":
                while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            elif c.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise MalformedHeaderError("incomplete PPM header")
        yield data[start:pos], pos


def parse_ppm(data: bytes) -> np.ndarray:
    tokens = list(_header_tokens(data))
    magic = tokens[0][0]
    if magic != b"P6":
        raise MalformedHeaderError(f"not a binary PPM (magic {magic!r})")
    try:
        width, height, maxval = (int(t) for t, _ in tokens[1:])
    except ValueError as exc:
        raise MalformedHeaderError("non-integer PPM header field") from exc
    if width < 1 or height < 1:
        raise MalformedHeaderError(f"invalid dimensions {width}x{height}")
    if maxval != 255:
        raise UnsupportedMaxvalError(f"only maxval 255 is supported, got {maxval}")
    offset = tokens[3][1]
    if offset >= len(data) or not data[offset:offset + 1].isspace():
        raise MalformedHeaderError("missing whitespace after maxval")
    offset += 1
    expected = width * height * 3
    payload = data[offset:offset + expected]
    if len(payload) < expected:
        raise TruncatedPayloadError(
            f"expected {expected} payload bytes, found {len(payload)}")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
    return pixels.astype(np.float64) / 255.0


def to_bytes(img) -> np.ndarray:
    """Quantize [0, 1] samples to uint8 with round-half-away-from-zero."""
    arr = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    return np.floor(arr * 255.0 + 0.5).astype(np.uint8)


def format_ppm(img) -> bytes:
    arr = check_image(img)
    h, w, _ = arr.shape
    return b"P6\n%d %d\n255\n" % (w, h) + to_bytes(arr).tobytes()


def read_image(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as f:
        return parse_ppm(f.read())


def write_image(img, path: str | os.PathLike) -> None:
    data = format_ppm(img)
    with open(path, "wb") as f:
        f.write(data)


def mse(a, b) -> float:
    a = check_image(a, "a")
    b = check_image(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def psnr(a, b) -> float:
    """PSNR in dB on the [0, 1] scale; identical images give ``PSNR_CAP``."""
    err = mse(a, b)
    if err == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(1.0 / err))
