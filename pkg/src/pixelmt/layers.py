"""Neural-net building blocks on plain numpy arrays with hand-written
backward passes: dense, layer norm, embedding lookup, multi-head attention,
feed-forward, sinusoidal positions, Adam, and the label-smoothed loss.

Layers share one contract: ``forward`` caches what the gradient needs on the
instance, ``backward`` consumes the cache and accumulates into each
``Parameter.grad`` while returning the input gradient. One forward/backward
pair is in flight per layer instance at a time. The ``dtype`` chosen at
construction (float32 for training, float64 for finite-difference work)
flows through every computation.
"""

from __future__ import annotations

from typing import List, Optional, Sequence

import numpy as np


class Parameter:
    """A named trainable array and its gradient accumulator."""

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Parameter({self.name}, shape={self.value.shape})"


def uniform_init(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    """Uniform fan-in scaling: U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    limit = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - x.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def sinusoidal_positions(length: int, d_model: int, dtype=np.float32) -> np.ndarray:
    """Fixed sin/cos position table of shape (length, d_model)."""
    pos = np.arange(length, dtype=np.float64)[:, None]
    dim = np.arange(d_model, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * (dim // 2) / d_model)
    table = np.where(dim % 2 == 0, np.sin(angle), np.cos(angle))
    return table.astype(dtype)


class Dense:
    """y = x @ W + b over the last axis; any number of leading axes."""

    def __init__(self, name: str, d_in: int, d_out: int, rng: np.random.Generator,
                 dtype=np.float32):
        self.w = Parameter(f"{name}.w", uniform_init(rng, (d_in, d_out), d_in, dtype))
        self.b = Parameter(f"{name}.b", np.zeros(d_out, dtype=dtype))
        self._x = None

    @property
    def params(self) -> List[Parameter]:
        return [self.w, self.b]

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return x @ self.w.value + self.b.value

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x = self._x
        x2 = x.reshape(-1, x.shape[-1])
        dy2 = dy.reshape(-1, dy.shape[-1])
        self.w.grad += x2.T @ dy2
        self.b.grad += dy2.sum(axis=0)
        return dy @ self.w.value.T


class LayerNorm:
    """Normalization over the last axis with learned scale and shift."""

    def __init__(self, name: str, d: int, dtype=np.float32, eps: float = 1e-5):
        self.gamma = Parameter(f"{name}.gamma", np.ones(d, dtype=dtype))
        self.beta = Parameter(f"{name}.beta", np.zeros(d, dtype=dtype))
        self.eps = eps
        self._cache = None

    @property
    def params(self) -> List[Parameter]:
        return [self.gamma, self.beta]

    def forward(self, x: np.ndarray) -> np.ndarray:
        mean = x.mean(axis=-1, keepdims=True)
        var = x.var(axis=-1, keepdims=True)
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        self._cache = (xhat, inv_std)
        return self.gamma.value * xhat + self.beta.value

    def backward(self, dy: np.ndarray) -> np.ndarray:
        xhat, inv_std = self._cache
        d = xhat.shape[-1]
        self.gamma.grad += (dy * xhat).reshape(-1, d).sum(axis=0)
        self.beta.grad += dy.reshape(-1, d).sum(axis=0)
        dxhat = dy * self.gamma.value
        return (dxhat - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)) * inv_std


class Embedding:
    """Token-id lookup scaled by sqrt(d_model), the usual transformer input."""

    def __init__(self, name: str, vocab: int, d_model: int, rng: np.random.Generator,
                 dtype=np.float32):
        self.table = Parameter(f"{name}.table",
                               uniform_init(rng, (vocab, d_model), d_model, dtype))
        self.scale = float(np.sqrt(d_model))
        self._ids = None

    @property
    def params(self) -> List[Parameter]:
        return [self.table]

    def forward(self, ids: np.ndarray) -> np.ndarray:
        self._ids = ids
        return self.table.value[ids] * self.scale

    def backward(self, dy: np.ndarray) -> None:
        np.add.at(self.table.grad, self._ids, dy * self.scale)


class MultiHeadAttention:
    """Scaled dot-product attention with h heads; self- or cross-attention.

    ``mask`` is additive (0 where attending is allowed, a large negative
    number where not), broadcastable to (batch, heads, Tq, Tk).
    """

    def __init__(self, name: str, d_model: int, heads: int, rng: np.random.Generator,
                 dtype=np.float32):
        if d_model % heads != 0:
            raise ValueError(f"d_model {d_model} not divisible by heads {heads}")
        self.heads = heads
        self.d_head = d_model // heads
        self.wq = Dense(f"{name}.wq", d_model, d_model, rng, dtype)
        self.wk = Dense(f"{name}.wk", d_model, d_model, rng, dtype)
        self.wv = Dense(f"{name}.wv", d_model, d_model, rng, dtype)
        self.wo = Dense(f"{name}.wo", d_model, d_model, rng, dtype)
        self._cache = None

    @property
    def params(self) -> List[Parameter]:
        return self.wq.params + self.wk.params + self.wv.params + self.wo.params

    def _split(self, x: np.ndarray) -> np.ndarray:
        b, t, _ = x.shape
        return x.reshape(b, t, self.heads, self.d_head).transpose(0, 2, 1, 3)

    def _merge(self, x: np.ndarray) -> np.ndarray:
        b, h, t, dh = x.shape
        return x.transpose(0, 2, 1, 3).reshape(b, t, h * dh)

    def forward(self, x_q: np.ndarray, x_kv: np.ndarray,
                mask: Optional[np.ndarray] = None) -> np.ndarray:
        q = self._split(self.wq.forward(x_q))
        k = self._split(self.wk.forward(x_kv))
        v = self._split(self.wv.forward(x_kv))
        scores = q @ k.transpose(0, 1, 3, 2) / np.sqrt(self.d_head)
        if mask is not None:
            scores = scores + mask
        attn = softmax(scores)
        ctx = attn @ v
        self._cache = (q, k, v, attn)
        return self.wo.forward(self._merge(ctx))

    def backward(self, dy: np.ndarray):
        """Returns (dx_q, dx_kv); for self-attention add them at the call site."""
        q, k, v, attn = self._cache
        dctx = self._split(self.wo.backward(dy))
        dattn = dctx @ v.transpose(0, 1, 3, 2)
        dv = attn.transpose(0, 1, 3, 2) @ dctx
        dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
        dscores /= np.sqrt(self.d_head)
        dq = dscores @ k
        dk = dscores.transpose(0, 1, 3, 2) @ q
        dx_q = self.wq.backward(self._merge(dq))
        dx_kv = self.wk.backward(self._merge(dk)) + self.wv.backward(self._merge(dv))
        return dx_q, dx_kv


class FeedForward:
    """Two dense layers with a ReLU between them."""

    def __init__(self, name: str, d_model: int, d_ff: int, rng: np.random.Generator,
                 dtype=np.float32):
        self.lin1 = Dense(f"{name}.lin1", d_model, d_ff, rng, dtype)
        self.lin2 = Dense(f"{name}.lin2", d_ff, d_model, rng, dtype)
        self._pre_relu = None

    @property
    def params(self) -> List[Parameter]:
        return self.lin1.params + self.lin2.params

    def forward(self, x: np.ndarray) -> np.ndarray:
        h = self.lin1.forward(x)
        self._pre_relu = h
        return self.lin2.forward(np.maximum(h, 0.0))

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dh = self.lin2.backward(dy)
        dh = dh * (self._pre_relu > 0)
        return self.lin1.backward(dh)


def label_smoothed_loss(logits: np.ndarray, gold: np.ndarray, mask: np.ndarray,
                        eps: float):
    """Label-smoothed cross entropy averaged over unmasked target positions.

    Per position: (1-eps) * NLL(gold) + eps * mean NLL over the vocabulary.
    Returns (loss, dlogits, logp) where dlogits is already divided by the
    token count and zeroed on masked positions, and logp is the full
    log-probability array for metric use.
    """
    if not 0.0 <= eps < 1.0:
        raise ValueError(f"label smoothing must be in [0, 1), got {eps}")
    vocab = logits.shape[-1]
    ntok = float(mask.sum())
    if ntok == 0:
        raise ValueError("loss mask selects no tokens")
    logp = log_softmax(logits)
    nll_gold = -np.take_along_axis(logp, gold[..., None], axis=-1)[..., 0]
    nll_mean = -logp.mean(axis=-1)
    per_tok = (1.0 - eps) * nll_gold + eps * nll_mean
    loss = float((per_tok * mask).sum() / ntok)

    target = np.full_like(logp, eps / vocab)
    np.put_along_axis(
        target, gold[..., None],
        np.take_along_axis(target, gold[..., None], axis=-1) + (1.0 - eps),
        axis=-1,
    )
    dlogits = (np.exp(logp) - target) * mask[..., None] / ntok
    return loss, dlogits, logp


class Adam:
    """Adam with bias correction; updates every parameter it was given."""

    def __init__(self, params: Sequence[Parameter], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.params = list(params)
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter names handed to optimizer")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.value) for p in self.params]
        self._v = [np.zeros_like(p.value) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad[...] = 0.0

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.value -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
