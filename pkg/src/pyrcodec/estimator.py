"""scikit-learn style front ends.

:class:`OverfittedCodec` fits one decoder to one image; :class:`PyramidUpsampler`
exposes the latent upsampler as a transformer.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import bitstream
from .decoder import decode_forward, init_model, loss
from .image import check_image, psnr
from .kernels import macs_nonseparable, macs_separable
from .training import TrainConfig, train
from .upsampler import (
    LegacyUpsamplerParams,
    UpsamplerParams,
    count_macs,
    level_shapes,
    synthesize_dense,
)


def check_pyramid(pyramid, levels: int | None = None) -> list[np.ndarray]:
    planes = [np.asarray(p, dtype=np.float64) for p in pyramid]
    if not planes:
        raise ValueError("pyramid must have at least one level")
    if any(p.ndim != 2 or p.size == 0 for p in planes):
        raise ValueError("every pyramid level must be a non-empty 2-D array")
    if levels is not None and len(planes) != levels:
        raise ValueError(f"expected {levels} levels, got {len(planes)}")
    expected = level_shapes(*planes[0].shape, len(planes))
    if [p.shape for p in planes] != expected:
        raise ValueError(f"pyramid shapes {[p.shape for p in planes]} != {expected}")
    return planes


class PyramidUpsampler(TransformerMixin, BaseEstimator):
    """Turn a latent pyramid into dense latents of shape (L, H, W).

    Kernels start at their default initialization (bilinear or bicubic L,
    Dirac H) unless ``params`` supplies trained ones.
    """

    def __init__(self, levels=7, n_l=1, k_l=4, n_h=1, k_h=5, legacy=False, params=None):
        self.levels = levels
        self.n_l = n_l
        self.k_l = k_l
        self.n_h = n_h
        self.k_h = k_h
        self.legacy = legacy
        self.params = params

    def fit(self, X, y=None):
        if self.params is not None:
            self.params_ = self.params
        elif self.legacy:
            self.params_ = LegacyUpsamplerParams.initial(self.levels, self.k_l)
        else:
            self.params_ = UpsamplerParams.initial(self.levels, self.n_l, self.k_l,
                                                   self.n_h, self.k_h)
        if X is not None:
            check_pyramid(X, self.params_.levels)
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        return synthesize_dense(check_pyramid(X, self.params_.levels), self.params_)

    def macs_per_pixel(self, height: int, width: int) -> float:
        check_is_fitted(self, "params_")
        return count_macs(height, width, self.params_)


class OverfittedCodec(BaseEstimator):
    """Per-image overfitted codec.

    ``fit(image)`` trains latents, upsampler kernels and synthesis network
    for the rate-distortion trade-off ``lam``; ``predict()`` returns the
    reconstruction a decoder obtains from the bitstream.
    """

    def __init__(self, lam=1e-3, levels=7, n_l=1, k_l=4, n_h=1, k_h=5, legacy=False,
                 hidden=(8,), iterations=2000, seed=0, checkpoint_every=100):
        self.lam = lam
        self.levels = levels
        self.n_l = n_l
        self.k_l = k_l
        self.n_h = n_h
        self.k_h = k_h
        self.legacy = legacy
        self.hidden = hidden
        self.iterations = iterations
        self.seed = seed
        self.checkpoint_every = checkpoint_every

    def _initial_model(self, height, width):
        return init_model(height, width, self.levels, n_l=self.n_l, k_l=self.k_l,
                          n_h=self.n_h, k_h=self.k_h, hidden=tuple(self.hidden),
                          legacy=self.legacy, seed=self.seed)

    def fit(self, X, y=None):
        target = check_image(X)
        model = self._initial_model(*target.shape[:2])
        config = TrainConfig(lam=self.lam, iterations=self.iterations, seed=self.seed,
                             checkpoint_every=self.checkpoint_every)
        result = train(model, target, config)
        self.model_ = result.model
        self.quantized_model_ = bitstream.quantize_model(result.model)
        self.trace_ = result.trace
        self.initial_loss_ = result.trace[0].j
        self.final_loss_ = loss(self.quantized_model_, target, self.lam, "hard")
        self.shape_ = target.shape
        return self

    def predict(self, X=None):
        check_is_fitted(self, "quantized_model_")
        return decode_forward(self.quantized_model_)

    def score(self, X, y=None):
        """PSNR (dB) of the decoded image against ``X``."""
        return psnr(self.predict(), check_image(X))

    def to_bytes(self) -> bytes:
        check_is_fitted(self, "model_")
        return bitstream.encode_bitstream(self.model_)

    def save(self, path) -> dict:
        check_is_fitted(self, "model_")
        return bitstream.write_bitstream(self.model_, path)

    @property
    def kernel_parameters_(self) -> int:
        check_is_fitted(self, "model_")
        return self.model_.upsampler.n_parameters

    @property
    def macs_(self) -> dict:
        check_is_fitted(self, "model_")
        formula = macs_nonseparable if self.legacy else macs_separable
        return {"formula": formula(self.k_l),
                "empirical": count_macs(self.shape_[0], self.shape_[1], self.model_.upsampler)}
