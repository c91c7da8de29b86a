"""Byte-oriented range coder with 16-bit frequency tables.

``low`` carries 48 significant bits plus a carry bit; carries are resolved
with the cache / pending-0xFF scheme used by LZMA. The first output byte
of that scheme is always zero and is not stored. At the end the shortest
value inside the final interval is written and trailing zero bytes are
dropped; the decoder reads zeros past the end of its input.
"""

from __future__ import annotations

import bisect
import math

import numpy as np

PRECISION = 48
TOP = 1 << PRECISION
BOTTOM = 1 << (PRECISION - 8)
SHIFT = PRECISION - 8
FREQ_BITS = 16
FREQ_TOTAL = 1 << FREQ_BITS


class RangeEncoder:
    def __init__(self):
        self.low = 0
        self.range = TOP - 1
        self.cache = 0
        self.cache_size = 1
        self.out = bytearray()

    def _shift_low(self) -> None:
        if self.low < (0xFF << SHIFT) or self.low >= TOP:
            carry = self.low >> PRECISION
            temp = self.cache
            while True:
                self.out.append((temp + carry) & 0xFF)
                temp = 0xFF
                self.cache_size -= 1
                if self.cache_size == 0:
                    break
            self.cache = (self.low >> SHIFT) & 0xFF
        self.cache_size += 1
        self.low = (self.low & (BOTTOM - 1)) << 8

    def encode(self, start: int, freq: int, total_bits: int = FREQ_BITS) -> None:
        """Narrow to ``[start, start + freq)`` out of ``2**total_bits``."""
        r = self.range >> total_bits
        self.low += start * r
        self.range = freq * r
        while self.range < BOTTOM:
            self.range <<= 8
            self._shift_low()

    def encode_raw(self, value: int, nbits: int = 16) -> None:
        self.encode(value, 1, nbits)

    def finish(self) -> bytes:
        hi = self.low + self.range
        for nbits in range(PRECISION + 8, -1, -1):
            mask = (1 << nbits) - 1
            v = (self.low + mask) & ~mask
            if v < hi:
                break
        self.low = v
        for _ in range(PRECISION // 8 + 1):
            self._shift_low()
        return bytes(self.out[1:]).rstrip(b"\x00")


class RangeDecoder:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0
        self.range = TOP - 1
        self.code = 0
        for _ in range(PRECISION // 8):
            self.code = (self.code << 8) | self._next()

    def _next(self) -> int:
        if self.pos < len(self.data):
            b = self.data[self.pos]
        else:
            b = 0
        self.pos += 1
        return b

    def target(self, total_bits: int = FREQ_BITS) -> int:
        self._r = self.range >> total_bits
        return min(self.code // self._r, (1 << total_bits) - 1)

    def consume(self, start: int, freq: int) -> None:
        self.code -= start * self._r
        self.range = freq * self._r
        while self.range < BOTTOM:
            self.code = (self.code << 8) | self._next()
            self.range <<= 8

    def decode_raw(self, nbits: int = 16) -> int:
        v = self.target(nbits)
        self.consume(v, 1)
        return v

    @property
    def overrun(self) -> int:
        """Bytes consumed beyond the end of the input (implicit zero padding)."""
        return max(0, self.pos - len(self.data))


class FrequencyTable:
    """Symbols ``0..n-1`` with integer frequencies summing to ``FREQ_TOTAL``."""

    def __init__(self, freqs):
        freqs = [int(f) for f in freqs]
        if min(freqs) < 1 or sum(freqs) != FREQ_TOTAL:
            raise ValueError("frequencies must be positive and sum to 2**16")
        self.freqs = freqs
        self.starts = [0]
        for f in freqs:
            self.starts.append(self.starts[-1] + f)

    def __len__(self) -> int:
        return len(self.freqs)

    def encode(self, enc: RangeEncoder, symbol: int) -> None:
        enc.encode(self.starts[symbol], self.freqs[symbol])

    def decode(self, dec: RangeDecoder) -> int:
        v = dec.target()
        s = bisect.bisect_right(self.starts, v) - 1
        dec.consume(self.starts[s], self.freqs[s])
        return s

    @classmethod
    def from_probabilities(cls, probs) -> "FrequencyTable":
        p = np.asarray(probs, dtype=np.float64)
        if p.size > FREQ_TOTAL // 2:
            raise ValueError("alphabet too large for 16-bit frequencies")
        p = p / p.sum()
        f = np.maximum(1, np.round(p * FREQ_TOTAL)).astype(np.int64)
        diff = FREQ_TOTAL - int(f.sum())
        # settle the rounding slack on the most probable symbols
        order = np.argsort(-f, kind="stable")
        i = 0
        while diff:
            j = order[i % order.size]
            step = 1 if diff > 0 else -1
            if f[j] + step >= 1:
                f[j] += step
                diff -= step
            i += 1
        return cls(f)


def laplace_escape_threshold(scale: float) -> int:
    """Largest magnitude coded directly; the tail beyond it has mass about 2**-16."""
    return int(min(4096, max(1, math.ceil(scale * FREQ_BITS * math.log(2.0)))))


def laplace_table(scale: float) -> tuple[FrequencyTable, int]:
    """Table over ``-T..T`` plus a final escape symbol, and the threshold ``T``."""
    t = laplace_escape_threshold(scale)
    edges = np.arange(-t, t + 2) - 0.5
    cdf = np.where(edges < 0, 0.5 * np.exp(edges / scale), 1.0 - 0.5 * np.exp(-edges / scale))
    probs = np.diff(cdf)
    tail = np.exp(-(t + 0.5) / scale)  # both tails together
    return FrequencyTable.from_probabilities(np.append(probs, tail)), t
