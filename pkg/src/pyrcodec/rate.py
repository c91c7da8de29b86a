"""Factorized zero-mean Laplace rate model for the latent pyramid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LN2 = np.log(2.0)


@dataclass
class RateModel:
    """Per-level Laplace scales, stored as ``log_scales`` so that b > 0."""

    log_scales: np.ndarray

    def __post_init__(self):
        self.log_scales = np.array(self.log_scales, dtype=np.float64).reshape(-1)

    @classmethod
    def initial(cls, levels: int) -> "RateModel":
        return cls(np.zeros(levels))

    @classmethod
    def from_scales(cls, scales) -> "RateModel":
        scales = np.asarray(scales, dtype=np.float64)
        if np.any(scales <= 0):
            raise ValueError("Laplace scales must be positive")
        return cls(np.log(scales))

    @property
    def scales(self) -> np.ndarray:
        return np.exp(self.log_scales)


def laplace_cdf(x, b):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x < 0, 0.5 * np.exp(x / b), 1.0 - 0.5 * np.exp(-x / b))


def symbol_bits(q, b, with_grad: bool = False):
    """-log2 of the Laplace mass on [q - 1/2, q + 1/2].

    With ``with_grad`` also returns d bits / d q and d bits / d b.
    """
    q = np.asarray(q, dtype=np.float64)
    a = np.abs(q)
    sign = np.sign(q)
    inner = a < 0.5
    # |q| >= 1/2: mass = 1/2 exp(-(a - 1/2)/b) (1 - exp(-1/b))
    e1 = np.exp(-1.0 / b)
    outer_bits = ((a - 0.5) / b - np.log(0.5 * (1.0 - e1))) / LN2
    # |q| < 1/2: mass = 1 - 1/2 exp(-(1/2 + a)/b) - 1/2 exp(-(1/2 - a)/b)
    ap = np.where(inner, a, 0.0)
    ep = np.exp(-(0.5 + ap) / b)
    em = np.exp(-(0.5 - ap) / b)
    mass_in = 1.0 - 0.5 * (ep + em)
    inner_bits = -np.log(mass_in) / LN2
    bits = np.where(inner, inner_bits, outer_bits)
    if not with_grad:
        return bits
    # derivatives of the inner mass
    dmass_da = 0.5 * (ep - em) / b
    dmass_db = -0.5 * (ep * (0.5 + ap) + em * (0.5 - ap)) / b**2
    d_in_da = -dmass_da / (mass_in * LN2)
    d_in_db = -dmass_db / (mass_in * LN2)
    d_out_da = 1.0 / (b * LN2)
    d_out_db = (-(a - 0.5) / b**2 + e1 / (b**2 * (1.0 - e1))) / LN2
    dq = np.where(inner, d_in_da, d_out_da) * sign
    db = np.where(inner, d_in_db, d_out_db)
    return bits, dq, db


def rate_bits(pyramid, rate: RateModel) -> float:
    """Total code length of the pyramid in bits under the Laplace model."""
    scales = rate.scales
    if len(pyramid) != scales.size:
        raise ValueError(f"{len(pyramid)} levels but {scales.size} scales")
    return float(sum(symbol_bits(p, b).sum() for p, b in zip(pyramid, scales)))


def rate_bits_and_grad(pyramid, rate: RateModel):
    """Total bits, d bits / d latents per level, and d bits / d log_scales."""
    total = 0.0
    grads = []
    g_log = np.zeros_like(rate.log_scales)
    for n, (p, b) in enumerate(zip(pyramid, rate.scales)):
        bits, dq, db = symbol_bits(p, b, with_grad=True)
        total += bits.sum()
        grads.append(dq)
        g_log[n] = db.sum() * b
    return float(total), grads, g_log
