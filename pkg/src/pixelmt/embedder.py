"""Visual front-end: a stack of conv blocks over image slices, flattened and
projected to the model dimension, with hand-written gradients.

A conv block is same-padded stride-1 2D convolution, batch normalization,
then ReLU, so spatial dimensions never change. With zero blocks the front-end
degenerates to flatten-and-project, a pure affine map of the slice pixels.

Batch normalization statistics are computed within one sentence: a packed
batch of slices carries per-sentence group lengths, and each group is
normalized with its own mean/variance. Running statistics pool the whole
batch and serve eval-mode forward passes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .layers import Dense, Parameter, uniform_init


@dataclass(frozen=True)
class EmbedderConfig:
    """Geometry of the visual front-end.

    ``c`` conv blocks (0 = flatten-and-project), all ``channels`` wide except
    for the single input channel, square ``kernel`` (odd, so same-padding is
    symmetric), projecting each slice of ``slice_shape`` to ``d_model``.
    """

    c: int
    d_model: int
    slice_shape: Tuple[int, int]
    kernel: int = 3
    channels: int = 1

    def __post_init__(self):
        if self.c < 0:
            raise ValueError("c must be >= 0")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ValueError(f"kernel must be odd and >= 1, got {self.kernel}")
        if self.channels < 1:
            raise ValueError("channels must be >= 1")
        if self.d_model < 1:
            raise ValueError("d_model must be >= 1")
        h, w = self.slice_shape
        if h < 1 or w < 1:
            raise ValueError(f"slice_shape must be positive, got {self.slice_shape}")


def _group_starts(lengths: np.ndarray) -> np.ndarray:
    return np.concatenate(([0], np.cumsum(lengths)[:-1]))


class Conv2dSame:
    """Stride-1 convolution with symmetric zero padding; output H,W = input H,W."""

    def __init__(self, name: str, in_ch: int, out_ch: int, kernel: int,
                 rng: np.random.Generator, dtype=np.float32):
        fan_in = in_ch * kernel * kernel
        self.w = Parameter(f"{name}.w",
                           uniform_init(rng, (out_ch, in_ch, kernel, kernel), fan_in, dtype))
        self.b = Parameter(f"{name}.b", np.zeros(out_ch, dtype=dtype))
        self.kernel = kernel
        self.pad = (kernel - 1) // 2
        self._windows = None

    @property
    def params(self) -> List[Parameter]:
        return [self.w, self.b]

    def forward(self, x: np.ndarray) -> np.ndarray:
        k, p = self.kernel, self.pad
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        win = sliding_window_view(xp, (k, k), axis=(2, 3))
        self._windows = win
        y = np.einsum("ncijuv,ocuv->noij", win, self.w.value)
        return y + self.b.value[None, :, None, None]

    def backward(self, dy: np.ndarray) -> np.ndarray:
        k, p = self.kernel, self.pad
        self.w.grad += np.einsum("noij,ncijuv->ocuv", dy, self._windows)
        self.b.grad += dy.sum(axis=(0, 2, 3))
        dyp = np.pad(dy, ((0, 0), (0, 0), (p, p), (p, p)))
        dwin = sliding_window_view(dyp, (k, k), axis=(2, 3))
        wflip = self.w.value[:, :, ::-1, ::-1]
        return np.einsum("noijuv,ocuv->ncij", dwin, wflip)


class BatchNorm2d:
    """Per-channel batch normalization over per-sentence slice groups.

    In train mode each group (a contiguous run of slices belonging to one
    sentence) is normalized with its own statistics; running statistics are
    updated from the pooled whole-batch moments. Eval mode normalizes with
    the running statistics and ignores grouping.
    """

    def __init__(self, name: str, channels: int, dtype=np.float32,
                 eps: float = 1e-5, momentum: float = 0.1):
        self.gamma = Parameter(f"{name}.gamma", np.ones(channels, dtype=dtype))
        self.beta = Parameter(f"{name}.beta", np.zeros(channels, dtype=dtype))
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.eps = eps
        self.momentum = momentum
        self._cache = None

    @property
    def params(self) -> List[Parameter]:
        return [self.gamma, self.beta]

    def forward(self, x: np.ndarray, lengths: Optional[np.ndarray] = None,
                train: bool = True) -> np.ndarray:
        n, c, h, w = x.shape
        if not train:
            inv = 1.0 / np.sqrt(self.running_var + self.eps)
            xhat = (x - self.running_mean[None, :, None, None]) * inv[None, :, None, None]
            self._cache = ("eval", xhat, inv)
            return self.gamma.value[None, :, None, None] * xhat \
                + self.beta.value[None, :, None, None]

        if lengths is None:
            lengths = np.array([n], dtype=np.int64)
        else:
            lengths = np.asarray(lengths, dtype=np.int64)
            if lengths.sum() != n or (lengths < 1).any():
                raise ValueError("group lengths must be positive and sum to the batch size")
        starts = _group_starts(lengths)
        counts = (lengths * h * w).astype(x.dtype)  # elements per group per channel

        sums = np.add.reduceat(x.sum(axis=(2, 3)), starts, axis=0)          # (G, C)
        sqsums = np.add.reduceat((x * x).sum(axis=(2, 3)), starts, axis=0)  # (G, C)
        mean = sums / counts[:, None]
        var = sqsums / counts[:, None] - mean ** 2
        var = np.maximum(var, 0.0)
        inv = 1.0 / np.sqrt(var + self.eps)

        mean_full = np.repeat(mean, lengths, axis=0)[:, :, None, None]
        inv_full = np.repeat(inv, lengths, axis=0)[:, :, None, None]
        xhat = (x - mean_full) * inv_full
        self._cache = ("train", xhat, inv, lengths, starts, counts)

        total = float(n * h * w)
        batch_mean = x.mean(axis=(0, 2, 3))
        batch_var = x.var(axis=(0, 2, 3))
        if total > 1:
            batch_var = batch_var * (total / (total - 1.0))
        m = self.momentum
        self.running_mean += m * (batch_mean - self.running_mean)
        self.running_var += m * (batch_var - self.running_var)

        return self.gamma.value[None, :, None, None] * xhat \
            + self.beta.value[None, :, None, None]

    def backward(self, dy: np.ndarray) -> np.ndarray:
        mode, xhat = self._cache[0], self._cache[1]
        self.gamma.grad += (dy * xhat).sum(axis=(0, 2, 3))
        self.beta.grad += dy.sum(axis=(0, 2, 3))
        dxhat = dy * self.gamma.value[None, :, None, None]
        if mode == "eval":
            inv = self._cache[2]
            return dxhat * inv[None, :, None, None]
        _, _, inv, lengths, starts, counts = self._cache
        s1 = np.add.reduceat(dxhat.sum(axis=(2, 3)), starts, axis=0)
        s2 = np.add.reduceat((dxhat * xhat).sum(axis=(2, 3)), starts, axis=0)
        s1_full = np.repeat(s1 / counts[:, None], lengths, axis=0)[:, :, None, None]
        s2_full = np.repeat(s2 / counts[:, None], lengths, axis=0)[:, :, None, None]
        inv_full = np.repeat(inv, lengths, axis=0)[:, :, None, None]
        return (dxhat - s1_full - xhat * s2_full) * inv_full


class ConvBlock:
    """Convolution, batch normalization, ReLU; spatial dims preserved."""

    def __init__(self, name: str, in_ch: int, out_ch: int, kernel: int,
                 rng: np.random.Generator, dtype=np.float32):
        self.conv = Conv2dSame(f"{name}.conv", in_ch, out_ch, kernel, rng, dtype)
        self.bn = BatchNorm2d(f"{name}.bn", out_ch, dtype)
        self._relu_mask = None

    @property
    def params(self) -> List[Parameter]:
        return self.conv.params + self.bn.params

    def forward(self, x: np.ndarray, lengths: Optional[np.ndarray] = None,
                train: bool = True) -> np.ndarray:
        y = self.bn.forward(self.conv.forward(x), lengths, train)
        self._relu_mask = y > 0
        return np.maximum(y, 0.0)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return self.conv.backward(self.bn.backward(dy * self._relu_mask))


class VisualEmbedder:
    """Slice stack -> conv blocks -> flatten -> linear projection to d_model.

    Input is a packed (n_slices, h, w) array covering one or more sentences,
    with per-sentence slice counts in ``lengths``; output row i is the
    embedding of slice i. Slices are processed independently except for the
    batch-norm statistics, which stay within each sentence's group.
    """

    def __init__(self, cfg: EmbedderConfig, rng: np.random.Generator,
                 dtype=np.float32, name: str = "embedder"):
        self.cfg = cfg
        h, w = cfg.slice_shape
        self.blocks: List[ConvBlock] = []
        in_ch = 1
        for i in range(cfg.c):
            self.blocks.append(
                ConvBlock(f"{name}.block{i}", in_ch, cfg.channels, cfg.kernel, rng, dtype))
            in_ch = cfg.channels
        self.flat_dim = (cfg.channels if cfg.c > 0 else 1) * h * w
        self.proj = Dense(f"{name}.proj", self.flat_dim, cfg.d_model, rng, dtype)
        self._dtype = dtype

    @property
    def params(self) -> List[Parameter]:
        out: List[Parameter] = []
        for b in self.blocks:
            out.extend(b.params)
        out.extend(self.proj.params)
        return out

    def forward(self, slices: np.ndarray, lengths: Optional[np.ndarray] = None,
                train: bool = True) -> np.ndarray:
        if slices.ndim != 3 or slices.shape[1:] != self.cfg.slice_shape:
            raise ValueError(
                f"expected slices of shape (n, {self.cfg.slice_shape[0]}, "
                f"{self.cfg.slice_shape[1]}), got {slices.shape}")
        x = slices.astype(self._dtype, copy=False)[:, None, :, :]
        for block in self.blocks:
            x = block.forward(x, lengths, train)
        self._post_conv_shape = x.shape
        flat = x.reshape(x.shape[0], self.flat_dim)
        return self.proj.forward(flat)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        """Input gradient of shape (n_slices, h, w); parameter grads accumulate."""
        dx = self.proj.backward(dy).reshape(self._post_conv_shape)
        for block in reversed(self.blocks):
            dx = block.backward(dx)
        # The first block (or the bare flatten) always sees one input channel.
        return dx[:, 0, :, :]
