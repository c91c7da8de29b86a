"""Bjontegaard delta rate between two rate-distortion curves."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline


class BDRateError(ValueError):
    pass


class InsufficientPointsError(BDRateError):
    pass


@dataclass(frozen=True)
class RDCurve:
    """(rate in bpp, PSNR in dB) points sorted by increasing rate."""

    rates: np.ndarray
    psnrs: np.ndarray

    def __post_init__(self):
        rates = np.asarray(self.rates, dtype=np.float64).reshape(-1)
        psnrs = np.asarray(self.psnrs, dtype=np.float64).reshape(-1)
        if rates.size != psnrs.size:
            raise ValueError("rates and psnrs must have the same length")
        if rates.size < 4:
            raise InsufficientPointsError(f"need at least 4 RD points, got {rates.size}")
        order = np.argsort(rates, kind="stable")
        rates, psnrs = rates[order], psnrs[order]
        if np.any(rates <= 0) or np.any(np.diff(rates) <= 0):
            raise ValueError("rates must be positive and distinct")
        if not np.all(np.isfinite(psnrs)):
            raise ValueError("PSNR values must be finite")
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "psnrs", psnrs)

    @classmethod
    def from_points(cls, points) -> "RDCurve":
        rates, psnrs = zip(*points)
        return cls(np.array(rates), np.array(psnrs))

    @classmethod
    def from_csv(cls, path: str | os.PathLike) -> "RDCurve":
        """Read a CSV with ``rate_bpp`` and ``psnr_db`` columns."""
        with open(path, newline="") as f:
            rows = list(csv.DictReader(f))
        return cls(np.array([float(r["rate_bpp"]) for r in rows]),
                   np.array([float(r["psnr_db"]) for r in rows]))

    def log_rate_spline(self) -> CubicSpline:
        """Natural cubic spline of log10(rate) as a function of PSNR."""
        order = np.argsort(self.psnrs, kind="stable")
        x = self.psnrs[order]
        if np.any(np.diff(x) <= 0):
            raise BDRateError("PSNR values must be distinct")
        return CubicSpline(x, np.log10(self.rates[order]), bc_type="natural")


def common_interval(anchor: RDCurve, test: RDCurve) -> tuple[float, float]:
    lo = max(anchor.psnrs.min(), test.psnrs.min())
    hi = min(anchor.psnrs.max(), test.psnrs.max())
    if hi <= lo:
        raise BDRateError("RD curves have no overlapping PSNR range")
    return lo, hi


def bd_rate(anchor: RDCurve, test: RDCurve) -> float:
    """Average rate difference of ``test`` vs ``anchor`` at equal PSNR, in percent.

    Negative values mean ``test`` needs fewer bits.
    """
    lo, hi = common_interval(anchor, test)
    area_anchor = anchor.log_rate_spline().integrate(lo, hi)
    area_test = test.log_rate_spline().integrate(lo, hi)
    delta = (area_test - area_anchor) / (hi - lo)
    return float((10.0**delta - 1.0) * 100.0)
