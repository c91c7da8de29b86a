"""Symmetric 1-D FIR kernels, their legacy 2-D counterparts, and analysis.

A :class:`SymmetricKernel1D` stores only ``ceil(K/2)`` free taps; the full
tap vector is the mirror image of those. Applied horizontally and
vertically, the 2-D response is the outer product of the 1-D one.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

# sum_{n=1}^{6} n / 2**n
LEVEL_WEIGHT = 1.890625


@dataclass(frozen=True)
class SymmetricKernel1D:
    length: int
    half_taps: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.length < 1:
            raise ValueError(f"kernel length must be positive, got {self.length}")
        half = np.array(self.half_taps, dtype=np.float64).reshape(-1)
        if half.size != n_free_taps(self.length):
            raise ValueError(
                f"length {self.length} needs {n_free_taps(self.length)} half taps, "
                f"got {half.size}")
        half.setflags(write=False)
        object.__setattr__(self, "half_taps", half)

    @property
    def taps(self) -> np.ndarray:
        return materialize(self)

    def with_half_taps(self, half_taps) -> "SymmetricKernel1D":
        return SymmetricKernel1D(self.length, half_taps)


@dataclass(frozen=True)
class Kernel2D:
    """Dense K x K kernel; the legacy non-separable upsampling filter."""

    size: int
    taps: np.ndarray = field(repr=False)

    def __post_init__(self):
        t = np.array(self.taps, dtype=np.float64)
        if t.shape != (self.size, self.size):
            raise ValueError(f"expected {self.size}x{self.size} taps, got {t.shape}")
        t.setflags(write=False)
        object.__setattr__(self, "taps", t)

    @classmethod
    def from_separable(cls, kernel: SymmetricKernel1D) -> "Kernel2D":
        t = materialize(kernel)
        return cls(kernel.length, np.outer(t, t))


def n_free_taps(length: int) -> int:
    return (length + 1) // 2


def mirror_map(length: int) -> np.ndarray:
    """Index of the free half tap feeding each full tap position."""
    i = np.arange(length)
    return np.minimum(i, length - 1 - i)


def materialize(kernel: SymmetricKernel1D) -> np.ndarray:
    return kernel.half_taps[mirror_map(kernel.length)]


def dirac(length: int = 5) -> SymmetricKernel1D:
    if length % 2 == 0:
        raise ValueError("a centred Dirac needs an odd length")
    half = np.zeros(n_free_taps(length))
    half[-1] = 1.0
    return SymmetricKernel1D(length, half)


def bilinear_init(length: int = 4) -> SymmetricKernel1D:
    """Stride-2 linear interpolator on the half-sample grid: [1, 3, 3, 1] / 4."""
    if length != 4:
        raise ValueError(f"bilinear init is defined for 4 taps, got {length}")
    return SymmetricKernel1D(4, [0.25, 0.75])


def keys_cubic(x, a: float = -0.5):
    x = np.abs(np.asarray(x, dtype=np.float64))
    near = (a + 2) * x**3 - (a + 3) * x**2 + 1
    far = a * x**3 - 5 * a * x**2 + 8 * a * x - 4 * a
    return np.where(x <= 1, near, np.where(x < 2, far, 0.0))


def bicubic_init(length: int = 8) -> SymmetricKernel1D:
    """Keys (a=-0.5) cubic convolution sampled at the stride-2 phase offsets.

    Full tap k sits at distance |k - 3.5| / 2 from the output sample in
    input units; each polyphase branch is normalized to unit sum.
    """
    if length != 8:
        raise ValueError(f"bicubic init is defined for 8 taps, got {length}")
    offsets = np.abs(np.arange(8) - 3.5) / 2.0
    taps = keys_cubic(offsets)
    for phase in (0, 1):
        taps[phase::2] /= taps[phase::2].sum()
    return SymmetricKernel1D(8, taps[:4])


def default_upsampling_init(length: int) -> SymmetricKernel1D:
    if length == 4:
        return bilinear_init(4)
    if length == 8:
        return bicubic_init(8)
    if length == 2:
        return SymmetricKernel1D(2, [1.0])
    raise ValueError(f"no default upsampling init for {length} taps")


# ---------------------------------------------------------------------------
# Frequency analysis


def dtft(taps, freqs) -> np.ndarray:
    """l(f) = sum_k t[k] exp(-j 2 pi f k) at each normalized frequency."""
    taps = np.asarray(taps, dtype=np.float64)
    k = np.arange(taps.size)
    return np.exp(-2j * np.pi * np.outer(np.asarray(freqs, dtype=np.float64), k)) @ taps


@dataclass(frozen=True)
class FrequencyResponse:
    """Magnitude on an N x N grid; rows index f1, columns f2, both on [0, 0.5]."""

    freqs: np.ndarray
    magnitudes: np.ndarray

    @property
    def n(self) -> int:
        return self.freqs.size

    def to_db(self, normalize: bool = True) -> np.ndarray:
        mag = self.magnitudes
        if normalize and mag[0, 0] > 0:
            mag = mag / mag[0, 0]
        return 20.0 * np.log10(np.maximum(mag, 1e-15))

    def to_csv(self, path: str | os.PathLike, normalize: bool = True) -> None:
        """Write ``f1,f2,mag_db`` rows; dB is relative to DC unless ``normalize`` is off."""
        db = self.to_db(normalize)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["f1", "f2", "mag_db"])
            for i, f1 in enumerate(self.freqs):
                for j, f2 in enumerate(self.freqs):
                    writer.writerow([f"{f1:.6f}", f"{f2:.6f}", f"{round(float(db[i, j]), 6) + 0.0:.6f}"])


def frequency_response(kernel: SymmetricKernel1D | Kernel2D, n: int = 64) -> FrequencyResponse:
    if n < 2:
        raise ValueError("grid size must be at least 2")
    freqs = np.linspace(0.0, 0.5, n)
    if isinstance(kernel, Kernel2D):
        k = np.arange(kernel.size)
        e = np.exp(-2j * np.pi * np.outer(freqs, k))
        mag = np.abs(e @ kernel.taps @ e.T)
    else:
        resp = np.abs(dtft(materialize(kernel), freqs))
        mag = np.outer(resp, resp)
    return FrequencyResponse(freqs, mag)


def cutoff_frequency(kernel: SymmetricKernel1D, level_db: float,
                     scan_points: int = 1024, tol: float = 1e-9) -> float:
    """First frequency where the DC-normalized response drops below ``level_db``.

    Returns 0.5 when the response never crosses the level on [0, 0.5].
    """
    if level_db >= 0:
        raise ValueError("level_db must be negative")
    taps = materialize(kernel)
    dc = abs(taps.sum())
    if dc == 0:
        raise ValueError("kernel has zero DC gain")

    def level(f):
        return 20.0 * np.log10(np.maximum(np.abs(dtft(taps, np.atleast_1d(f))) / dc, 1e-300))

    grid = np.linspace(0.0, 0.5, scan_points)
    below = np.nonzero(level(grid) < level_db)[0]
    if below.size == 0:
        return 0.5
    hi = grid[below[0]]
    lo = grid[below[0] - 1]
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if level(mid)[0] < level_db:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Complexity


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def macs_nonseparable(k: int) -> int:
    if k < 1:
        raise ValueError("kernel size must be positive")
    return _round_half_up(k * k * LEVEL_WEIGHT)


def macs_separable(k: int) -> int:
    if k < 1:
        raise ValueError("kernel size must be positive")
    return _round_half_up(3 * k * LEVEL_WEIGHT)
