"""Overfitted decoder: latent pyramid -> dense latents -> pixelwise MLP -> RGB.

Gradients are written out by hand. Every stage is either linear (the
upsampler), a small dense network, or an elementwise function, so the
reverse pass is short and exact.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .image import check_image
from .kernels import Kernel2D, SymmetricKernel1D
from .rate import RateModel, rate_bits_and_grad
from .upsampler import (
    LegacyUpsamplerParams,
    UpsamplerParams,
    level_shapes,
    make_graph,
)

PARAM_GROUPS = ("latents", "kernels", "synthesis", "rate")


@dataclass
class SynthesisNet:
    """Pixelwise MLP; ReLU on hidden layers, linear output to 3 channels."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def initial(cls, n_in: int, hidden=(8,), rng=None) -> "SynthesisNet":
        rng = np.random.default_rng(rng)
        widths = [n_in, *hidden, 3]
        weights, biases = [], []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    @property
    def hidden(self) -> tuple[int, ...]:
        return tuple(w.shape[1] for w in self.weights[:-1])

    @property
    def n_in(self) -> int:
        return self.weights[0].shape[0]

    def __call__(self, feats: np.ndarray) -> np.ndarray:
        return self.run(feats)[0]

    def run(self, feats):
        acts = [feats]
        x = feats
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            x = x @ w + b
            if i < len(self.weights) - 1:
                x = np.maximum(x, 0.0)
            acts.append(x)
        return x, acts


@dataclass
class DecoderModel:
    latents: list[np.ndarray]
    upsampler: UpsamplerParams | LegacyUpsamplerParams
    synthesis: SynthesisNet
    rate: RateModel = field(default=None)

    def __post_init__(self):
        self.latents = [np.asarray(p, dtype=np.float64) for p in self.latents]
        if self.rate is None:
            self.rate = RateModel.initial(len(self.latents))
        self.check()

    def check(self) -> None:
        levels = self.upsampler.levels
        if len(self.latents) != levels:
            raise ValueError(f"{len(self.latents)} latent planes for {levels} levels")
        expected = level_shapes(self.height, self.width, levels)
        for n, (p, s) in enumerate(zip(self.latents, expected)):
            if p.shape != s:
                raise ValueError(f"latent level {n} has shape {p.shape}, expected {s}")
        if self.synthesis.n_in != levels:
            raise ValueError(f"synthesis expects {self.synthesis.n_in} inputs, not {levels}")
        if self.rate.log_scales.size != levels:
            raise ValueError("one Laplace scale per level is required")

    @property
    def height(self) -> int:
        return self.latents[0].shape[0]

    @property
    def width(self) -> int:
        return self.latents[0].shape[1]

    @property
    def levels(self) -> int:
        return len(self.latents)

    @property
    def legacy(self) -> bool:
        return isinstance(self.upsampler, LegacyUpsamplerParams)

    def copy(self) -> "DecoderModel":
        return copy.deepcopy(self)

    # flat parameter access for the optimizer

    def get_params(self) -> dict[str, np.ndarray]:
        p = {f"latent{n}": x.copy() for n, x in enumerate(self.latents)}
        if self.legacy:
            p["legacy"] = self.upsampler.kernel.taps.copy()
        else:
            p.update({f"l{i}": k.half_taps.copy() for i, k in enumerate(self.upsampler.l_kernels)})
            p.update({f"h{i}": k.half_taps.copy() for i, k in enumerate(self.upsampler.h_kernels)})
        p.update({f"w{i}": w.copy() for i, w in enumerate(self.synthesis.weights)})
        p.update({f"b{i}": b.copy() for i, b in enumerate(self.synthesis.biases)})
        p["log_scales"] = self.rate.log_scales.copy()
        return p

    def set_params(self, p: dict[str, np.ndarray]) -> None:
        self.latents = [np.array(p[f"latent{n}"]) for n in range(self.levels)]
        up = self.upsampler
        if self.legacy:
            self.upsampler = LegacyUpsamplerParams(up.levels, Kernel2D(up.kernel.size, p["legacy"]))
        else:
            self.upsampler = UpsamplerParams(
                up.levels,
                tuple(k.with_half_taps(p[f"l{i}"]) for i, k in enumerate(up.l_kernels)),
                tuple(k.with_half_taps(p[f"h{i}"]) for i, k in enumerate(up.h_kernels)))
        n_layers = len(self.synthesis.weights)
        self.synthesis = SynthesisNet([np.array(p[f"w{i}"]) for i in range(n_layers)],
                                      [np.array(p[f"b{i}"]) for i in range(n_layers)])
        self.rate = RateModel(np.array(p["log_scales"]))


def param_group(name: str) -> str:
    if name.startswith("latent"):
        return "latents"
    if name == "log_scales":
        return "rate"
    if name[0] in "wb":
        return "synthesis"
    return "kernels"


def init_model(height: int, width: int, levels: int = 7, *, n_l: int = 1, k_l: int = 4,
               n_h: int = 1, k_h: int = 5, hidden=(8,), legacy: bool = False,
               seed: int = 0) -> DecoderModel:
    """Zero latents, Glorot-uniform synthesis, unit Laplace scales.

    Legacy and separable models built with the same seed share synthesis
    weights, so both start from the same operating point.
    """
    rng = np.random.default_rng(seed)
    if legacy:
        upsampler = LegacyUpsamplerParams.initial(levels, k_l)
    else:
        upsampler = UpsamplerParams.initial(levels, n_l, k_l, n_h, k_h)
    latents = [np.zeros(s) for s in level_shapes(height, width, levels)]
    synthesis = SynthesisNet.initial(levels, hidden, rng)
    return DecoderModel(latents, upsampler, synthesis, RateModel.initial(levels))


def surrogate_latents(latents, mode: str, noise=None):
    """Latent values seen by the decoder in a given mode.

    ``none``: continuous values; ``noise``: values plus ``noise``;
    ``ste`` and ``hard``: rounded values (``ste`` differs only in the
    backward pass, where rounding is treated as identity).
    """
    if mode == "none":
        return [np.asarray(p, dtype=np.float64) for p in latents]
    if mode == "noise":
        if noise is None:
            raise ValueError("noise mode needs a noise sample per level")
        return [p + u for p, u in zip(latents, noise)]
    if mode in ("ste", "hard"):
        return [np.round(p) for p in latents]
    raise ValueError(f"unknown latent mode {mode!r}")


def draw_noise(latents, rng) -> list[np.ndarray]:
    return [rng.uniform(-0.5, 0.5, size=p.shape) for p in latents]


def _forward(model: DecoderModel, values):
    graph = make_graph(model.upsampler, model.height, model.width)
    dense = graph.forward(values)
    feats = dense.reshape(model.levels, -1).T
    raw, acts = model.synthesis.run(feats)
    img = np.clip(raw, 0.0, 1.0).reshape(model.height, model.width, 3)
    return img, (graph, raw, acts)


def decode_forward(model: DecoderModel, quantized: bool = True) -> np.ndarray:
    """Reconstruct the RGB image; latents are rounded when ``quantized``."""
    model.check()
    values = surrogate_latents(model.latents, "hard" if quantized else "none")
    return _forward(model, values)[0]


@dataclass(frozen=True)
class LossTerms:
    j: float
    d: float
    r_bpp: float

    def __iter__(self):
        return iter((self.j, self.d, self.r_bpp))


def loss(model: DecoderModel, target, lam: float, mode: str = "hard", noise=None) -> LossTerms:
    """J = D + lambda * R with D the MSE and R the latent rate in bits per pixel."""
    return _loss(model, target, lam, mode, noise, need_grad=False)[0]


def backward(model: DecoderModel, target, lam: float, mode: str = "noise", noise=None,
             frozen=()) -> tuple[LossTerms, dict[str, np.ndarray]]:
    """Loss terms and dJ/dparam for every entry of :meth:`DecoderModel.get_params`.

    Rounding in ``ste`` mode passes gradients straight through. Parameters
    in a ``frozen`` group get exactly zero gradient.
    """
    terms, grads = _loss(model, target, lam, mode, noise, need_grad=True)
    for name in grads:
        if param_group(name) in frozen:
            grads[name] = np.zeros_like(grads[name])
    return terms, grads


def _loss(model, target, lam, mode, noise, need_grad):
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    target = check_image(target, "target")
    if target.shape[:2] != (model.height, model.width):
        raise ValueError(f"target is {target.shape[:2]}, model is {(model.height, model.width)}")
    values = surrogate_latents(model.latents, mode, noise)
    img, (graph, raw, acts) = _forward(model, values)
    diff = img - target
    d = float(np.mean(diff**2))
    n_pix = model.height * model.width
    bits, dbits_dq, dbits_dlog = rate_bits_and_grad(values, model.rate)
    r_bpp = bits / n_pix
    terms = LossTerms(d + lam * r_bpp, d, r_bpp)
    if not need_grad:
        return terms, None

    grads = {}
    g = (2.0 / diff.size) * diff.reshape(-1, 3)
    g = g * ((raw >= 0.0) & (raw <= 1.0))
    weights = model.synthesis.weights
    for i in range(len(weights) - 1, -1, -1):
        grads[f"w{i}"] = acts[i].T @ g
        grads[f"b{i}"] = g.sum(axis=0)
        g = g @ weights[i].T
        if i > 0:
            g = g * (acts[i] > 0)
    g_dense = np.ascontiguousarray(g.T).reshape(model.levels, model.height, model.width)
    g_pyr, g_kernels = graph.backward(values, g_dense)
    scale = lam / n_pix
    for n, (gp, gr) in enumerate(zip(g_pyr, dbits_dq)):
        grads[f"latent{n}"] = gp + scale * gr
    if model.legacy:
        grads["legacy"] = g_kernels
    else:
        for kind in ("l", "h"):
            for i, gk in enumerate(g_kernels[kind]):
                grads[f"{kind}{i}"] = gk
    grads["log_scales"] = scale * dbits_dlog
    return terms, grads
