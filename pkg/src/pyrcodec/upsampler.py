"""Pyramidal latent upsampling.

Each pyramid level ``n`` is pre-filtered at its native resolution by a
separable symmetric kernel ``H`` and then brought to image resolution by
``n`` stride-2 separable upsamplings with a kernel ``L``. Every 1-D pass is
described by a gather table (:class:`AxisOp`): output sample ``i`` reads
input ``idx[i, j]`` weighted by full tap ``tap_of[i, j]``. For the stride-2
pass the table is the polyphase decomposition, so each output reads only
``K/2`` inputs.

Boundaries use half-sample symmetric (mirror) extension throughout.

The legacy structure (one non-separable ``K x K`` kernel shared by all
levels, no pre-filter) is kept as a baseline and as an oracle.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from .kernels import (
    Kernel2D,
    SymmetricKernel1D,
    default_upsampling_init,
    dirac,
    materialize,
    mirror_map,
)

MAX_LEVELS = 7


def mirror_index(i, n: int):
    """Map possibly out-of-range indices onto [0, n) by half-sample mirroring."""
    i = np.mod(np.asarray(i), 2 * n)
    return np.where(i >= n, 2 * n - 1 - i, i)


def level_shapes(height: int, width: int, levels: int) -> list[tuple[int, int]]:
    return [(math.ceil(height / 2**n), math.ceil(width / 2**n)) for n in range(levels)]


@dataclass(eq=False)
class AxisOp:
    """Gather table for one 1-D filtering pass along an axis."""

    n_in: int
    n_out: int
    n_taps: int
    idx: np.ndarray
    tap_of: np.ndarray

    def apply(self, x: np.ndarray, taps: np.ndarray, axis: int, counter=None) -> np.ndarray:
        x = np.moveaxis(np.asarray(x, dtype=np.float64), axis, -1)
        if x.shape[-1] != self.n_in:
            raise ValueError(f"axis length {x.shape[-1]} does not match {self.n_in}")
        y = np.einsum("...ij,ij->...i", x[..., self.idx], taps[self.tap_of])
        if counter is not None:
            counter.add(self.idx.size * (x.size // self.n_in))
        return np.moveaxis(y, -1, axis)

    def matrix(self, taps: np.ndarray) -> np.ndarray:
        a = np.zeros((self.n_out, self.n_in))
        rows = np.broadcast_to(np.arange(self.n_out)[:, None], self.idx.shape)
        np.add.at(a, (rows, self.idx), taps[self.tap_of])
        return a

    def tap_grad(self, grad_matrix: np.ndarray) -> np.ndarray:
        rows = np.broadcast_to(np.arange(self.n_out)[:, None], self.idx.shape)
        return np.bincount(self.tap_of.ravel(), weights=grad_matrix[rows, self.idx].ravel(),
                           minlength=self.n_taps)

    @functools.cached_property
    def selections(self) -> list[np.ndarray]:
        """One 0/1 matrix per slot: ``(S @ x)[i] == x[idx[i, slot]]``."""
        mats = []
        for slot in range(self.idx.shape[1]):
            s = np.zeros((self.n_out, self.n_in))
            s[np.arange(self.n_out), self.idx[:, slot]] = 1.0
            mats.append(s)
        return mats

    @functools.cached_property
    def tap_onehots(self) -> list[np.ndarray]:
        eye = np.eye(self.n_taps)
        return [eye[self.tap_of[:, slot]] for slot in range(self.idx.shape[1])]


@functools.lru_cache(maxsize=None)
def conv_op(n: int, n_taps: int) -> AxisOp:
    """Same-size convolution with an odd kernel."""
    if n_taps % 2 == 0:
        raise ValueError(f"pre-filter kernels must have odd length, got {n_taps}")
    c = (n_taps - 1) // 2
    i = np.arange(n)[:, None]
    k = np.arange(n_taps)[None, :]
    idx = mirror_index(i - k + c, n)
    tap_of = np.broadcast_to(k, idx.shape).copy()
    return AxisOp(n, n, n_taps, idx, tap_of)


@functools.lru_cache(maxsize=None)
def upsample_op(n_in: int, n_out: int, n_taps: int) -> AxisOp:
    """Stride-2 transpose convolution as two polyphase branches of ``K/2`` taps.

    With zero insertion ``u[2j] = x[j]`` the direct form is
    ``y[n] = sum_k t[k] u[n - k + K/2 - 1]``; output ``2i`` is the even branch.
    """
    if n_taps % 2 or n_taps < 2:
        raise ValueError(f"upsampling kernels must have even length, got {n_taps}")
    if n_out not in (2 * n_in - 1, 2 * n_in):
        raise ValueError(f"cannot upsample {n_in} samples to {n_out}")
    c = n_taps // 2 - 1
    out = np.arange(n_out)[:, None]
    first = (out + c) % 2  # lowest tap index of this output's branch
    k = first + 2 * np.arange(n_taps // 2)[None, :]
    idx = mirror_index((out - k + c) // 2, n_in)
    return AxisOp(n_in, n_out, n_taps, idx, k)


class MacCounter:
    def __init__(self):
        self.total = 0

    def add(self, n: int) -> None:
        self.total += int(n)


# ---------------------------------------------------------------------------
# Parameters


@dataclass(frozen=True)
class UpsamplerParams:
    """Per-level separable kernels.

    Level ``n`` is pre-filtered by ``h_kernels[min(n, n_H - 1)]`` and, for
    ``n >= 1``, upsampled by ``l_kernels[min(n - 1, n_L - 1)]``. An empty
    ``h_kernels`` disables the pre-filter branch.
    """

    levels: int
    l_kernels: tuple[SymmetricKernel1D, ...]
    h_kernels: tuple[SymmetricKernel1D, ...] = ()

    def __post_init__(self):
        if not 1 <= self.levels <= MAX_LEVELS:
            raise ValueError(f"levels must be in [1, {MAX_LEVELS}], got {self.levels}")
        object.__setattr__(self, "l_kernels", tuple(self.l_kernels))
        object.__setattr__(self, "h_kernels", tuple(self.h_kernels))
        if not 1 <= len(self.l_kernels) <= self.levels:
            raise ValueError(f"need 1..{self.levels} L kernels, got {len(self.l_kernels)}")
        if len(self.h_kernels) > self.levels:
            raise ValueError(f"at most {self.levels} H kernels, got {len(self.h_kernels)}")
        if len({k.length for k in self.l_kernels}) != 1:
            raise ValueError("all L kernels must share one length")
        if len({k.length for k in self.h_kernels}) > 1:
            raise ValueError("all H kernels must share one length")
        for k in self.l_kernels:
            if k.length % 2:
                raise ValueError(f"L kernels must have even length, got {k.length}")
        for k in self.h_kernels:
            if k.length % 2 == 0:
                raise ValueError(f"H kernels must have odd length, got {k.length}")

    @classmethod
    def initial(cls, levels: int = MAX_LEVELS, n_l: int = 1, k_l: int = 4,
                n_h: int = 1, k_h: int = 5) -> "UpsamplerParams":
        """Bilinear (K=4) or bicubic (K=8) L kernels and Dirac H kernels."""
        return cls(levels,
                   tuple(default_upsampling_init(k_l) for _ in range(n_l)),
                   tuple(dirac(k_h) for _ in range(n_h)))

    @property
    def n_l(self) -> int:
        return len(self.l_kernels)

    @property
    def n_h(self) -> int:
        return len(self.h_kernels)

    @property
    def k_l(self) -> int:
        return self.l_kernels[0].length

    @property
    def k_h(self) -> int:
        return self.h_kernels[0].length if self.h_kernels else 0

    def h_index(self, level: int):
        return min(level, self.n_h - 1) if self.h_kernels else None

    def l_index(self, level: int):
        return min(level - 1, self.n_l - 1) if level >= 1 else None

    @property
    def assignment(self) -> dict[int, tuple]:
        return {n: (self.h_index(n), self.l_index(n)) for n in range(self.levels)}

    @property
    def n_parameters(self) -> int:
        return sum(k.half_taps.size for k in self.l_kernels + self.h_kernels)


@dataclass(frozen=True)
class LegacyUpsamplerParams:
    """A single non-separable K x K kernel shared by every upsampling stage."""

    levels: int
    kernel: Kernel2D

    def __post_init__(self):
        if not 1 <= self.levels <= MAX_LEVELS:
            raise ValueError(f"levels must be in [1, {MAX_LEVELS}], got {self.levels}")
        if self.kernel.size % 2:
            raise ValueError("legacy kernel size must be even")

    @classmethod
    def initial(cls, levels: int = MAX_LEVELS, k: int = 4) -> "LegacyUpsamplerParams":
        return cls(levels, Kernel2D.from_separable(default_upsampling_init(k)))

    @property
    def k_l(self) -> int:
        return self.kernel.size

    @property
    def n_parameters(self) -> int:
        return self.kernel.taps.size


# ---------------------------------------------------------------------------
# Reference (gather) implementation


def _check_plane(plane) -> np.ndarray:
    x = np.asarray(plane, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise ValueError(f"plane must be a non-empty 2-D array, got shape {x.shape}")
    return x


def prefilter(plane, h: SymmetricKernel1D, counter=None) -> np.ndarray:
    """Separable same-size filtering: horizontal pass, then vertical pass."""
    x = _check_plane(plane)
    if h.length % 2 == 0:
        raise ValueError(f"pre-filter kernels must have odd length, got {h.length}")
    taps = materialize(h)
    x = conv_op(x.shape[1], h.length).apply(x, taps, axis=1, counter=counter)
    return conv_op(x.shape[0], h.length).apply(x, taps, axis=0, counter=counter)


def upsample2x(plane, l: SymmetricKernel1D, target_w: int, target_h: int,
               counter=None) -> np.ndarray:
    """Separable stride-2 upsampling through the polyphase branches of ``l``."""
    x = _check_plane(plane)
    h_in, w_in = x.shape
    taps = materialize(l)
    x = upsample_op(w_in, target_w, l.length).apply(x, taps, axis=1, counter=counter)
    return upsample_op(h_in, target_h, l.length).apply(x, taps, axis=0, counter=counter)


def legacy_upsample2x(plane, kernel: Kernel2D, target_w: int, target_h: int,
                      counter=None) -> np.ndarray:
    """Non-separable stride-2 upsampling; same phase convention as :func:`upsample2x`."""
    x = _check_plane(plane)
    rows = upsample_op(x.shape[0], target_h, kernel.size)
    cols = upsample_op(x.shape[1], target_w, kernel.size)
    return _legacy_stage(x, kernel.taps, rows, cols, counter)


def _legacy_weights(taps, rows: AxisOp, cols: AxisOp, a: int, b: int) -> np.ndarray:
    # weight of slot (a, b) at every output position
    return rows.tap_onehots[a] @ taps @ cols.tap_onehots[b].T


def _legacy_stage(x, taps, rows: AxisOp, cols: AxisOp, counter=None):
    """One stride-2 stage on a plane (h, w) or a batch of planes (B, h, w)."""
    m = rows.idx.shape[1]
    out = np.zeros(x.shape[:-2] + (rows.n_out, cols.n_out))
    for a in range(m):
        xa = x[..., rows.idx[:, a], :]
        for b in range(m):
            out += _legacy_weights(taps, rows, cols, a, b) * xa[..., cols.idx[:, b]]
    if counter is not None:
        counter.add(out.size * m * m)
    return out


def _check_pyramid(pyramid, levels: int) -> tuple[int, int]:
    if len(pyramid) != levels:
        raise ValueError(f"expected {levels} pyramid levels, got {len(pyramid)}")
    height, width = np.shape(pyramid[0])
    for n, (shape, p) in enumerate(zip(level_shapes(height, width, levels), pyramid)):
        if np.shape(p) != shape:
            raise ValueError(f"level {n} has shape {np.shape(p)}, expected {shape}")
    return height, width


def synthesize_dense(pyramid, params, counter=None) -> np.ndarray:
    """Upsample every pyramid level to image resolution; returns shape (L, H, W)."""
    if isinstance(params, LegacyUpsamplerParams):
        return legacy_synthesize_dense(pyramid, params, counter)
    height, width = _check_pyramid(pyramid, params.levels)
    shapes = level_shapes(height, width, params.levels)
    dense = np.empty((params.levels, height, width))
    for n, plane in enumerate(pyramid):
        x = _check_plane(plane)
        hi = params.h_index(n)
        if hi is not None:
            x = prefilter(x, params.h_kernels[hi], counter)
        if n:
            l = params.l_kernels[params.l_index(n)]
            for target_h, target_w in reversed(shapes[:n]):
                x = upsample2x(x, l, target_w, target_h, counter)
        dense[n] = x
    return dense


def legacy_synthesize_dense(pyramid, params: LegacyUpsamplerParams, counter=None) -> np.ndarray:
    height, width = _check_pyramid(pyramid, params.levels)
    shapes = level_shapes(height, width, params.levels)
    dense = np.empty((params.levels, height, width))
    for n, plane in enumerate(pyramid):
        x = _check_plane(plane)
        for target_h, target_w in reversed(shapes[:n]):
            x = legacy_upsample2x(x, params.kernel, target_w, target_h, counter)
        dense[n] = x
    return dense


def count_macs(height: int, width: int, params) -> float:
    """Multiply-accumulates executed by :func:`synthesize_dense`, per decoded pixel."""
    counter = MacCounter()
    pyramid = [np.zeros(s) for s in level_shapes(height, width, params.levels)]
    synthesize_dense(pyramid, params, counter)
    return counter.total / (height * width)


# ---------------------------------------------------------------------------
# Differentiable path used by training.
#
# For separable kernels each level is a bilinear map X -> R X C^T, where R and
# C are products of the 1-D pass matrices. Matrices are rebuilt from the same
# gather tables as above, so both paths share one definition.


def _chain_forward(mats):
    prods = []
    acc = None
    for m in mats:
        acc = m if acc is None else m @ acc
        prods.append(acc)
    return prods


def _chain_backward(mats, prods, grad):
    grads = [None] * len(mats)
    for i in range(len(mats) - 1, -1, -1):
        grads[i] = grad if i == 0 else grad @ prods[i - 1].T
        grad = mats[i].T @ grad
    return grads


def _axis_chain(params: UpsamplerParams, n: int, sizes: list[int]):
    """(op, kernel kind, kernel index) for each 1-D pass along one axis of level n."""
    chain = []
    hi = params.h_index(n)
    if hi is not None:
        chain.append((conv_op(sizes[n], params.k_h), "h", hi))
    li = params.l_index(n)
    for m in range(n, 0, -1):
        chain.append((upsample_op(sizes[m], sizes[m - 1], params.k_l), "l", li))
    return chain


class SeparableGraph:
    """Forward/backward of :func:`synthesize_dense` for :class:`UpsamplerParams`."""

    def __init__(self, params: UpsamplerParams, height: int, width: int):
        self.params = params
        shapes = level_shapes(height, width, params.levels)
        self.rows = [_axis_chain(params, n, [s[0] for s in shapes]) for n in range(params.levels)]
        self.cols = [_axis_chain(params, n, [s[1] for s in shapes]) for n in range(params.levels)]
        self.taps = {"l": [materialize(k) for k in params.l_kernels],
                     "h": [materialize(k) for k in params.h_kernels]}
        self._cache = []
        for rows, cols in zip(self.rows, self.cols):
            rmats = [op.matrix(self.taps[kind][i]) for op, kind, i in rows]
            cmats = [op.matrix(self.taps[kind][i]) for op, kind, i in cols]
            self._cache.append((rmats, _chain_forward(rmats), cmats, _chain_forward(cmats)))

    @staticmethod
    def _composite(prods, n_in):
        return prods[-1] if prods else np.eye(n_in)

    def forward(self, pyramid) -> np.ndarray:
        out = []
        for x, (rmats, rprods, cmats, cprods) in zip(pyramid, self._cache):
            r = self._composite(rprods, x.shape[0])
            c = self._composite(cprods, x.shape[1])
            out.append(r @ x @ c.T)
        return np.stack(out)

    def backward(self, pyramid, grad_dense):
        """Gradients w.r.t. the pyramid planes and the free half taps."""
        grad_pyr = []
        full = {"l": [np.zeros(k.length) for k in self.params.l_kernels],
                "h": [np.zeros(k.length) for k in self.params.h_kernels]}
        for n, x in enumerate(pyramid):
            rmats, rprods, cmats, cprods = self._cache[n]
            g = grad_dense[n]
            r = self._composite(rprods, x.shape[0])
            c = self._composite(cprods, x.shape[1])
            grad_pyr.append(r.T @ g @ c)
            if rmats:
                grad_r = g @ c @ x.T
                for (op, kind, i), gm in zip(self.rows[n], _chain_backward(rmats, rprods, grad_r)):
                    full[kind][i] += op.tap_grad(gm)
            if cmats:
                grad_c = g.T @ r @ x
                for (op, kind, i), gm in zip(self.cols[n], _chain_backward(cmats, cprods, grad_c)):
                    full[kind][i] += op.tap_grad(gm)
        half = {kind: [_fold_mirror(t) for t in taps] for kind, taps in full.items()}
        return grad_pyr, half


def _fold_mirror(full_grad: np.ndarray) -> np.ndarray:
    m = mirror_map(full_grad.size)
    return np.bincount(m, weights=full_grad, minlength=m.max() + 1)


class LegacyGraph:
    """Forward/backward of the legacy non-separable pipeline.

    Levels are independent, but every level currently at the same resolution
    goes through the same stage, so they are processed as one batch.
    """

    def __init__(self, params: LegacyUpsamplerParams, height: int, width: int):
        self.params = params
        self.shapes = level_shapes(height, width, params.levels)
        self.taps = params.kernel.taps
        k = params.kernel.size
        self.stages = {}
        for m in range(1, params.levels):
            (h_in, w_in), (h_out, w_out) = self.shapes[m], self.shapes[m - 1]
            self.stages[m] = (upsample_op(h_in, h_out, k), upsample_op(w_in, w_out, k))

    def forward(self, pyramid) -> np.ndarray:
        levels = self.params.levels
        self._inputs = {}
        batch = np.asarray(pyramid[-1])[None]
        for m in range(levels - 1, 0, -1):
            self._inputs[m] = batch
            batch = _legacy_stage(batch, self.taps, *self.stages[m])
            batch = np.concatenate([np.asarray(pyramid[m - 1])[None], batch])
        return batch

    def backward(self, pyramid, grad_dense):
        k = self.params.kernel.size
        grad_taps = np.zeros((k, k))
        grad_pyr = [None] * self.params.levels
        g = np.asarray(grad_dense)
        for m in range(1, self.params.levels):
            grad_pyr[m - 1] = g[0]
            g = g[1:]
            rows, cols = self.stages[m]
            x = self._inputs[m]
            slots = rows.idx.shape[1]
            gx = np.zeros(x.shape)
            for a in range(slots):
                xa = x[..., rows.idx[:, a], :]
                gw = np.zeros(x.shape[:-2] + (rows.n_out, cols.n_in))
                for b in range(slots):
                    w = _legacy_weights(self.taps, rows, cols, a, b)
                    gw += (g * w) @ cols.selections[b]
                    prod = (g * xa[..., cols.idx[:, b]]).sum(axis=0)
                    grad_taps += rows.tap_onehots[a].T @ prod @ cols.tap_onehots[b]
                gx += rows.selections[a].T @ gw
            g = gx
        grad_pyr[-1] = g[0]
        return grad_pyr, grad_taps


def make_graph(params, height: int, width: int):
    if isinstance(params, LegacyUpsamplerParams):
        return LegacyGraph(params, height, width)
    return SeparableGraph(params, height, width)
