"""Miniature encoder-decoder attention model with two interchangeable source
front-ends: the visual slice embedder or a token embedding matrix.

Pre-norm residual blocks, fixed sinusoidal positions added after either
front-end, label-smoothed cross entropy, greedy decoding, and a plain-text
checkpoint format (manifest + one little-endian float32 blob per array).

Component RNG streams are derived from (seed, component index), so two models
built from the same seed share identical decoder/target parameters even when
their source front-ends differ.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .embedder import EmbedderConfig, VisualEmbedder
from .layers import (Adam, Dense, Embedding, FeedForward, LayerNorm,
                     MultiHeadAttention, Parameter, label_smoothed_loss,
                     sinusoidal_positions)
from .render import RenderConfig, get_font
from .segmentation import BOS_ID, EOS_ID, PAD_ID
from .slicer import SliceConfig

NEG_INF = -1e9


@dataclass(frozen=True)
class ModelConfig:
    """Everything needed to rebuild a model deterministically.

    ``frontend`` selects how source sentences enter the encoder: "visual"
    renders and slices them through the conv front-end, "token" looks ids up
    in an embedding matrix (sized ``source_vocab``). The target side always
    uses a token vocabulary of size ``target_vocab``. Visual geometry fields
    (font_size, window, stride, conv_blocks, kernel, channels) are ignored by
    the token front-end.
    """

    target_vocab: int
    frontend: str = "visual"
    source_vocab: int = 0
    layers: int = 2
    heads: int = 4
    d_model: int = 64
    d_ff: int = 128
    label_smoothing: float = 0.2
    max_len: int = 160
    seed: int = 0
    conv_blocks: int = 1
    kernel: int = 3
    channels: int = 1
    font_size: int = 10
    font_path: Optional[str] = None
    window: int = 20
    stride: int = 10
    dtype: str = "float32"

    def __post_init__(self):
        if self.frontend not in ("visual", "token"):
            raise ValueError(f"unknown frontend {self.frontend!r}")
        if self.d_model % self.heads != 0:
            raise ValueError("d_model must be divisible by heads")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ValueError("label_smoothing must be in [0, 1)")
        if self.layers < 1 or self.max_len < 2 or self.target_vocab < 5:
            raise ValueError("layers >= 1, max_len >= 2, target_vocab >= 5 required")
        if self.frontend == "token" and self.source_vocab < 5:
            raise ValueError("token frontend requires source_vocab >= 5")
        if self.frontend == "visual" and self.window < self.stride:
            raise ValueError("window must be >= stride")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype}")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    def render_config(self) -> RenderConfig:
        return RenderConfig(font_path=self.font_path, font_size=self.font_size,
                            min_width=self.window)

    def slice_config(self) -> SliceConfig:
        return SliceConfig(window=self.window, stride=self.stride)


@dataclass(frozen=True)
class TrainConfig:
    """Optimization knobs: ``batch_tokens`` is target tokens per step."""

    batch_tokens: int = 800
    lr: float = 1e-3
    max_steps: int = 300
    eval_every: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.batch_tokens < 1:
            raise ValueError("batch_tokens must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.max_steps < 1 or self.eval_every < 1:
            raise ValueError("max_steps and eval_every must be >= 1")


@dataclass
class SourceBatch:
    """One prepared batch of source sentences.

    Token form: ``ids`` (B, Ts) with ``mask`` marking real positions. Visual
    form: ``slices`` packs all sentences' slice stacks along axis 0 in batch
    order, ``lengths`` gives slices per sentence, and ``mask`` is the
    (B, max_len) position-validity map.
    """

    kind: str
    mask: np.ndarray
    ids: Optional[np.ndarray] = None
    slices: Optional[np.ndarray] = None
    lengths: Optional[np.ndarray] = None

    @property
    def batch_size(self) -> int:
        return self.mask.shape[0]


def pad_ids(seqs: Sequence[Sequence[int]], dtype=np.float32,
            pad_id: int = PAD_ID) -> Tuple[np.ndarray, np.ndarray]:
    """Right-pad id sequences into (B, T) ids plus a real-position mask."""
    b = len(seqs)
    t = max(len(s) for s in seqs)
    ids = np.full((b, t), pad_id, dtype=np.int64)
    mask = np.zeros((b, t), dtype=dtype)
    for i, s in enumerate(seqs):
        ids[i, : len(s)] = s
        mask[i, : len(s)] = 1.0
    return ids, mask


def pack_slices(stacks: Sequence[np.ndarray], dtype=np.float32) -> SourceBatch:
    """Pack per-sentence slice stacks into one contiguous visual SourceBatch."""
    lengths = np.array([s.shape[0] for s in stacks], dtype=np.int64)
    packed = np.concatenate(stacks, axis=0)
    b, t = len(stacks), int(lengths.max())
    mask = np.zeros((b, t), dtype=dtype)
    for i, n in enumerate(lengths):
        mask[i, :n] = 1.0
    return SourceBatch(kind="visual", mask=mask, slices=packed, lengths=lengths)


class EncoderLayer:
    def __init__(self, name: str, d_model: int, heads: int, d_ff: int,
                 rng: np.random.Generator, dtype):
        self.ln1 = LayerNorm(f"{name}.ln1", d_model, dtype)
        self.attn = MultiHeadAttention(f"{name}.attn", d_model, heads, rng, dtype)
        self.ln2 = LayerNorm(f"{name}.ln2", d_model, dtype)
        self.ffn = FeedForward(f"{name}.ffn", d_model, d_ff, rng, dtype)

    @property
    def params(self) -> List[Parameter]:
        return self.ln1.params + self.attn.params + self.ln2.params + self.ffn.params

    def forward(self, x: np.ndarray, mask: np.ndarray) -> np.ndarray:
        h = self.ln1.forward(x)
        x = x + self.attn.forward(h, h, mask)
        return x + self.ffn.forward(self.ln2.forward(x))

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dx = dy + self.ln2.backward(self.ffn.backward(dy))
        dq, dkv = self.attn.backward(dx)
        return dx + self.ln1.backward(dq + dkv)


class DecoderLayer:
    def __init__(self, name: str, d_model: int, heads: int, d_ff: int,
                 rng: np.random.Generator, dtype):
        self.ln1 = LayerNorm(f"{name}.ln1", d_model, dtype)
        self.self_attn = MultiHeadAttention(f"{name}.self_attn", d_model, heads, rng, dtype)
        self.ln2 = LayerNorm(f"{name}.ln2", d_model, dtype)
        self.cross_attn = MultiHeadAttention(f"{name}.cross_attn", d_model, heads, rng, dtype)
        self.ln3 = LayerNorm(f"{name}.ln3", d_model, dtype)
        self.ffn = FeedForward(f"{name}.ffn", d_model, d_ff, rng, dtype)

    @property
    def params(self) -> List[Parameter]:
        return (self.ln1.params + self.self_attn.params + self.ln2.params
                + self.cross_attn.params + self.ln3.params + self.ffn.params)

    def forward(self, x: np.ndarray, enc: np.ndarray, self_mask: np.ndarray,
                cross_mask: np.ndarray) -> np.ndarray:
        h = self.ln1.forward(x)
        x = x + self.self_attn.forward(h, h, self_mask)
        x = x + self.cross_attn.forward(self.ln2.forward(x), enc, cross_mask)
        return x + self.ffn.forward(self.ln3.forward(x))

    def backward(self, dy: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Returns (dx, d_enc_out) for this layer."""
        dx = dy + self.ln3.backward(self.ffn.backward(dy))
        dq, denc = self.cross_attn.backward(dx)
        dx = dx + self.ln2.backward(dq)
        dq2, dkv2 = self.self_attn.backward(dx)
        return dx + self.ln1.backward(dq2 + dkv2), denc


def _component_rng(seed: int, component: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, component))))


class Seq2SeqModel:
    """Encoder-decoder over prepared batches; text plumbing lives upstream."""

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        dtype = cfg.np_dtype
        self.dtype = dtype

        # Independent init streams per component: swapping the front-end
        # leaves every decoder/target parameter bit-identical for a seed.
        if cfg.frontend == "visual":
            font = get_font(cfg.render_config())
            ecfg = EmbedderConfig(c=cfg.conv_blocks, d_model=cfg.d_model,
                                  slice_shape=(font.line_height, cfg.window),
                                  kernel=cfg.kernel, channels=cfg.channels)
            self.frontend = VisualEmbedder(ecfg, _component_rng(cfg.seed, 0), dtype)
            self.src_embed = None
        else:
            self.frontend = None
            self.src_embed = Embedding("src_embed", cfg.source_vocab, cfg.d_model,
                                       _component_rng(cfg.seed, 0), dtype)

        enc_rng = _component_rng(cfg.seed, 1)
        self.enc_layers = [EncoderLayer(f"enc.{i}", cfg.d_model, cfg.heads, cfg.d_ff,
                                        enc_rng, dtype) for i in range(cfg.layers)]
        self.enc_ln = LayerNorm("enc.final_ln", cfg.d_model, dtype)

        dec_rng = _component_rng(cfg.seed, 2)
        self.tgt_embed = Embedding("tgt_embed", cfg.target_vocab, cfg.d_model,
                                   _component_rng(cfg.seed, 3), dtype)
        self.dec_layers = [DecoderLayer(f"dec.{i}", cfg.d_model, cfg.heads, cfg.d_ff,
                                        dec_rng, dtype) for i in range(cfg.layers)]
        self.dec_ln = LayerNorm("dec.final_ln", cfg.d_model, dtype)
        self.out_proj = Dense("out_proj", cfg.d_model, cfg.target_vocab,
                              _component_rng(cfg.seed, 4), dtype)

        self._pos = sinusoidal_positions(cfg.max_len, cfg.d_model, dtype)
        self._cache: Dict[str, object] = {}

    # -- parameter plumbing -------------------------------------------------

    @property
    def params(self) -> List[Parameter]:
        out: List[Parameter] = []
        if self.frontend is not None:
            out.extend(self.frontend.params)
        if self.src_embed is not None:
            out.extend(self.src_embed.params)
        for layer in self.enc_layers:
            out.extend(layer.params)
        out.extend(self.enc_ln.params)
        out.extend(self.tgt_embed.params)
        for layer in self.dec_layers:
            out.extend(layer.params)
        out.extend(self.dec_ln.params)
        out.extend(self.out_proj.params)
        return out

    def buffers(self) -> List[Tuple[str, np.ndarray]]:
        """Non-trainable state that must persist across save/load."""
        out: List[Tuple[str, np.ndarray]] = []
        if self.frontend is not None:
            for block in self.frontend.blocks:
                bn = block.bn
                prefix = bn.gamma.name.rsplit(".", 1)[0]
                out.append((f"{prefix}.running_mean", bn.running_mean))
                out.append((f"{prefix}.running_var", bn.running_var))
        return out

    def named_arrays(self) -> List[Tuple[str, np.ndarray]]:
        return [(p.name, p.value) for p in self.params] + self.buffers()

    def parameter_count(self) -> int:
        return int(sum(p.value.size for p in self.params))

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad[...] = 0.0

    # -- forward / backward -------------------------------------------------

    def _check_len(self, t: int, what: str) -> None:
        if t > self.cfg.max_len:
            raise ValueError(f"{what} length {t} exceeds max_len {self.cfg.max_len}")

    def _key_mask(self, mask: np.ndarray) -> np.ndarray:
        return ((1.0 - mask) * NEG_INF)[:, None, None, :]

    def encode(self, src: SourceBatch, train: bool = True) -> np.ndarray:
        b, t = src.mask.shape
        self._check_len(t, "source")
        if src.kind == "token":
            x = self.src_embed.forward(src.ids)
        else:
            emb = self.frontend.forward(src.slices, src.lengths, train)
            x = np.zeros((b, t, self.cfg.d_model), dtype=self.dtype)
            rows = np.repeat(np.arange(b), src.lengths)
            cols = np.concatenate([np.arange(n) for n in src.lengths])
            x[rows, cols] = emb
            self._cache["vis_scatter"] = (rows, cols)
        x = x + self._pos[None, :t]
        mask = self._key_mask(src.mask)
        for layer in self.enc_layers:
            x = layer.forward(x, mask)
        self._cache["src"] = src
        return self.enc_ln.forward(x)

    def decode(self, tgt_in: np.ndarray, enc_out: np.ndarray,
               src_mask: np.ndarray, tgt_in_mask: np.ndarray) -> np.ndarray:
        b, t = tgt_in.shape
        self._check_len(t, "target")
        y = self.tgt_embed.forward(tgt_in) + self._pos[None, :t]
        causal = np.triu(np.full((t, t), NEG_INF, dtype=self.dtype), k=1)
        self_mask = causal[None, None] + self._key_mask(tgt_in_mask)
        cross_mask = self._key_mask(src_mask)
        for layer in self.dec_layers:
            y = layer.forward(y, enc_out, self_mask, cross_mask)
        return self.out_proj.forward(self.dec_ln.forward(y))

    def forward_loss(self, src: SourceBatch, tgt_ids: np.ndarray,
                     tgt_mask: np.ndarray, train: bool = True):
        """Loss on one batch; targets are BOS … EOS with right padding.

        Returns (loss, dlogits, logp); feed dlogits straight to backward().
        """
        enc_out = self.encode(src, train)
        tgt_in, gold = tgt_ids[:, :-1], tgt_ids[:, 1:]
        logits = self.decode(tgt_in, enc_out, src.mask, tgt_mask[:, :-1])
        loss_mask = tgt_mask[:, 1:]
        loss, dlogits, logp = label_smoothed_loss(
            logits, gold, loss_mask, self.cfg.label_smoothing)
        return loss, dlogits, logp

    def backward(self, dlogits: np.ndarray) -> None:
        dy = self.dec_ln.backward(self.out_proj.backward(dlogits))
        denc_total = None
        for layer in reversed(self.dec_layers):
            dy, denc = layer.backward(dy)
            denc_total = denc if denc_total is None else denc_total + denc
        self.tgt_embed.backward(dy)

        dx = self.enc_ln.backward(denc_total)
        for layer in reversed(self.enc_layers):
            dx = layer.backward(dx)
        src: SourceBatch = self._cache["src"]
        if src.kind == "token":
            self.src_embed.backward(dx)
        else:
            rows, cols = self._cache["vis_scatter"]
            self.frontend.backward(dx[rows, cols])

    # -- decoding -------------------------------------------------------------

    def greedy_decode(self, src: SourceBatch,
                      max_len: Optional[int] = None) -> Tuple[List[List[int]], List[bool]]:
        """Argmax decoding from BOS until EOS or the length limit.

        Returns per-sentence target ids (specials stripped) and a flag that
        is False where decoding hit the limit before emitting EOS.
        """
        limit = min(max_len or self.cfg.max_len, self.cfg.max_len) - 1
        enc_out = self.encode(src, train=False)
        b = src.batch_size
        ys = np.full((b, 1), BOS_ID, dtype=np.int64)
        done = np.zeros(b, dtype=bool)
        outs: List[List[int]] = [[] for _ in range(b)]
        for _ in range(limit):
            ys_mask = np.ones(ys.shape, dtype=self.dtype)
            logits = self.decode(ys, enc_out, src.mask, ys_mask)
            nxt = logits[:, -1, :].argmax(axis=-1)
            nxt[done] = EOS_ID
            for i in range(b):
                if not done[i]:
                    if nxt[i] == EOS_ID:
                        done[i] = True
                    else:
                        outs[i].append(int(nxt[i]))
            if done.all():
                break
            ys = np.concatenate([ys, nxt[:, None]], axis=1)
        return outs, [bool(d) for d in done]


# ---------------------------------------------------------------------------
# Checkpoints: config.json + manifest.txt + params/<name>.bin (little-endian
# float32). Loading and re-saving a checkpoint is byte-identical.
# ---------------------------------------------------------------------------


def save_checkpoint(model: Seq2SeqModel, ckpt_dir: str) -> None:
    os.makedirs(os.path.join(ckpt_dir, "params"), exist_ok=True)
    cfg_json = json.dumps(dataclasses.asdict(model.cfg), sort_keys=True, indent=2)
    with open(os.path.join(ckpt_dir, "config.json"), "w", encoding="utf-8") as f:
        f.write(cfg_json + "\n")
    arrays = model.named_arrays()
    with open(os.path.join(ckpt_dir, "manifest.txt"), "w", encoding="utf-8") as f:
        for name, arr in arrays:
            shape = "x".join(str(d) for d in arr.shape)
            f.write(f"{name}\tfloat32\t{shape}\n")
    for name, arr in arrays:
        blob = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        with open(os.path.join(ckpt_dir, "params", name + ".bin"), "wb") as f:
            f.write(blob)


def load_checkpoint(ckpt_dir: str) -> Seq2SeqModel:
    with open(os.path.join(ckpt_dir, "config.json"), encoding="utf-8") as f:
        cfg = ModelConfig(**json.load(f))
    model = Seq2SeqModel(cfg)
    arrays = dict(model.named_arrays())
    with open(os.path.join(ckpt_dir, "manifest.txt"), encoding="utf-8") as f:
        for line in f:
            name, dtype_s, shape_s = line.rstrip("\n").split("\t")
            shape = tuple(int(d) for d in shape_s.split("x")) if shape_s else ()
            if name not in arrays:
                raise ValueError(f"checkpoint has unknown array {name!r}")
            target = arrays[name]
            if target.shape != shape:
                raise ValueError(
                    f"shape mismatch for {name}: checkpoint {shape}, model {target.shape}")
            with open(os.path.join(ckpt_dir, "params", name + ".bin"), "rb") as bf:
                blob = bf.read()
            loaded = np.frombuffer(blob, dtype="<f4").reshape(shape)
            np.copyto(target, loaded.astype(model.dtype))
    return model


def make_optimizer(model: Seq2SeqModel, lr: float) -> Adam:
    return Adam(model.params, lr=lr)
