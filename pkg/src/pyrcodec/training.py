"""Per-image rate-distortion training of a :class:`DecoderModel`."""

from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .decoder import DecoderModel, backward, draw_noise, loss, param_group
from .image import PSNR_CAP

logger = logging.getLogger(__name__)

PAPER_LAMBDAS = (0.0001, 0.0004, 0.0010, 0.0040, 0.0200)


class TrainingError(RuntimeError):
    """Raised when the objective becomes non-finite."""


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 1e-3
    iterations: int = 2000
    lr_latents: float = 1e-2
    lr_params: float = 1e-2
    lr_kernels: float | None = 1e-4
    lr_min: float = 1e-5
    noise_fraction: float = 0.8
    ste_latents: bool = False
    seed: int = 0
    checkpoint_every: int = 100
    frozen: tuple[str, ...] = ()

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")
        if self.checkpoint_every < 1:
            raise ValueError("checkpoint_every must be positive")
        if not 0.0 <= self.noise_fraction <= 1.0:
            raise ValueError("noise_fraction must lie in [0, 1]")

    def learning_rate(self, base: float, it: int) -> float:
        """Cosine decay from ``base`` to ``lr_min`` over the run."""
        if self.iterations <= 1:
            return base
        frac = it / (self.iterations - 1)
        return self.lr_min + 0.5 * (base - self.lr_min) * (1.0 + math.cos(math.pi * frac))

    def base_rate(self, group: str) -> float:
        if group == "latents":
            return self.lr_latents
        if group == "kernels" and self.lr_kernels is not None:
            return self.lr_kernels
        return self.lr_params

    def mode(self, it: int) -> str:
        return "noise" if it < self.noise_fraction * self.iterations else "ste"


@dataclass(frozen=True)
class Checkpoint:
    iteration: int
    j: float
    d: float
    r_bpp: float
    mode: str

    @property
    def psnr_db(self) -> float:
        return PSNR_CAP if self.d == 0 else min(PSNR_CAP, 10.0 * math.log10(1.0 / self.d))


@dataclass
class TrainResult:
    model: DecoderModel
    trace: list[Checkpoint] = field(default_factory=list)
    final: Checkpoint | None = None


class Adam:
    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params, grads, lrs) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name, g in grads.items():
            m = self.m.setdefault(name, np.zeros_like(g))
            v = self.v.setdefault(name, np.zeros_like(g))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params[name] -= lrs[name] * (m / c1) / (np.sqrt(v / c2) + self.eps)


def checkpoint(model: DecoderModel, target, lam: float, it: int, mode: str) -> Checkpoint:
    """Quantized (hard-rounded) loss; the operating point the bitstream would get."""
    t = loss(model, target, lam, "hard")
    return Checkpoint(it, t.j, t.d, t.r_bpp, mode)


def train(model: DecoderModel, target, config: TrainConfig) -> TrainResult:
    """Minimize D + lambda * R for one image.

    Latents see additive uniform noise for the first ``noise_fraction`` of
    the iterations and are rounded afterwards. In the rounding phase the
    latents stay at their integer values unless ``ste_latents`` is set, in
    which case they keep moving with straight-through gradients; the
    remaining parameters train on the exact quantized objective.

    Checkpoints always report the hard-rounded loss. The returned model has
    integer latents.
    """
    model = model.copy()
    rng = np.random.default_rng([config.seed, 0])
    params = model.get_params()
    optimizer = Adam()
    result = TrainResult(model)

    result.trace.append(checkpoint(model, target, config.lam, 0, config.mode(0)))
    rounded = False
    for it in range(config.iterations):
        mode = config.mode(it)
        frozen = config.frozen
        if mode == "ste" and not config.ste_latents:
            frozen = (*frozen, "latents")
            if not rounded:
                params.update({f"latent{n}": np.round(p) for n, p in enumerate(model.latents)})
                model.set_params(params)
                rounded = True
        noise = draw_noise(model.latents, rng) if mode == "noise" else None
        terms, grads = backward(model, target, config.lam, mode, noise, frozen)
        if not math.isfinite(terms.j):
            raise TrainingError(f"non-finite loss at iteration {it}: {terms}")
        grads = {k: g for k, g in grads.items() if param_group(k) not in frozen}
        lrs = {k: config.learning_rate(config.base_rate(param_group(k)), it) for k in grads}
        optimizer.step(params, grads, lrs)
        model.set_params(params)
        done = it + 1
        if done % config.checkpoint_every == 0 or done == config.iterations:
            ck = checkpoint(model, target, config.lam, done, config.mode(it))
            if not math.isfinite(ck.j):
                raise TrainingError(f"non-finite loss at checkpoint {done}: {ck}")
            result.trace.append(ck)
            logger.debug("iter %d J=%.6g D=%.6g R=%.4f bpp", done, ck.j, ck.d, ck.r_bpp)

    model.latents = [np.round(p) for p in model.latents]
    terms = loss(model, target, config.lam, mode="hard")
    result.final = Checkpoint(config.iterations, terms.j, terms.d, terms.r_bpp, "hard")
    return result


def write_trace_csv(trace, path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["iteration", "J", "D_mse", "psnr_db", "rate_bpp"])
        for ck in trace:
            writer.writerow([ck.iteration, f"{ck.j:.10g}", f"{ck.d:.10g}",
                             f"{ck.psnr_db:.6f}", f"{ck.r_bpp:.10g}"])
