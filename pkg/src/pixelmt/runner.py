"""The glue between text and arrays, the training loop, and run/sweep
orchestration.

A Pipeline owns one model plus its text plumbing: the source front-end
(rendering+slicing, or token segmentation) and the target segmentation. The
run orchestrator executes corpus generation, training, checkpointing, and the
configured noise sweeps inside an exclusively created run directory, so a run
can be reproduced from that directory alone.
"""

from __future__ import annotations

import dataclasses
import itertools
import json
import os
import shutil
import time
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import corpus as corpus_mod
from . import evaluation, noise, render, segmentation
from .config import (CorpusPaths, NoiseSweepSpec, RunConfig, SegmentationSpec,
                     load_run_config, serialize_run_config)
from .evaluation import DegradationCurve, corpus_bleu, degradation_sweep
from .model import (ModelConfig, Seq2SeqModel, SourceBatch, TrainConfig,
                    load_checkpoint, make_optimizer, pack_slices, pad_ids,
                    save_checkpoint)
from .slicer import slice_pixels


class StageError(RuntimeError):
    """A run stage failed; the message carries the stage tag."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass
class Pipeline:
    """One model with its source/target text plumbing."""

    model: Seq2SeqModel
    seg: SegmentationSpec
    tgt_vocab: segmentation.Vocab
    tgt_bpe: Optional[segmentation.BpeModel] = None
    src_vocab: Optional[segmentation.Vocab] = None
    src_bpe: Optional[segmentation.BpeModel] = None

    # -- construction ---------------------------------------------------------

    @classmethod
    def build(cls, run_cfg: RunConfig, train_src: Sequence[str],
              train_tgt: Sequence[str]) -> "Pipeline":
        """Train segmentation models on the training corpus and size the model."""
        seg = run_cfg.segmentation
        tgt_bpe = None
        if seg.tgt_mode == "bpe":
            tgt_bpe = segmentation.bpe_train(train_tgt, seg.tgt_merges)
        tgt_vocab = segmentation.corpus_vocab(train_tgt, seg.tgt_mode, model=tgt_bpe)

        src_bpe = None
        src_vocab = None
        if seg.src_mode == "bpe":
            src_bpe = segmentation.bpe_train(train_src, seg.src_merges)
        if seg.src_mode != "visual":
            src_vocab = segmentation.corpus_vocab(
                train_src, seg.src_mode, model=src_bpe,
                n=seg.ngram_n, stride=seg.ngram_stride)

        mcfg = run_cfg.model_config(
            target_vocab=len(tgt_vocab),
            source_vocab=len(src_vocab) if src_vocab is not None else 0)
        return cls(model=Seq2SeqModel(mcfg), seg=seg, tgt_vocab=tgt_vocab,
                   tgt_bpe=tgt_bpe, src_vocab=src_vocab, src_bpe=src_bpe)

    # -- text <-> arrays ------------------------------------------------------

    def prepare_source(self, lines: Sequence[str]) -> SourceBatch:
        cfg = self.model.cfg
        if self.seg.src_mode == "visual":
            rcfg = cfg.render_config()
            scfg = cfg.slice_config()
            font = render.get_font(rcfg)
            stacks = [slice_pixels(render.render_line(line, rcfg, font).pixels, scfg)
                      for line in lines]
            return pack_slices(stacks, dtype=self.model.dtype)
        seqs = [
            segmentation.segment(line, self.seg.src_mode, model=self.src_bpe,
                                 n=self.seg.ngram_n, stride=self.seg.ngram_stride,
                                 vocab=self.src_vocab, add_specials=False).ids
            for line in lines
        ]
        ids, mask = pad_ids(seqs, dtype=self.model.dtype)
        return SourceBatch(kind="token", mask=mask, ids=ids)

    def prepare_targets(self, lines: Sequence[str]) -> Tuple[np.ndarray, np.ndarray]:
        seqs = [
            segmentation.segment(line, self.seg.tgt_mode, model=self.tgt_bpe,
                                 vocab=self.tgt_vocab, add_specials=True).ids
            for line in lines
        ]
        return pad_ids(seqs, dtype=self.model.dtype)

    def target_length(self, line: str) -> int:
        return len(segmentation.segment(line, self.seg.tgt_mode, model=self.tgt_bpe,
                                        vocab=self.tgt_vocab, add_specials=True).ids)

    def translate(self, lines: Sequence[str], batch_size: int = 64) -> List[str]:
        """Greedy-decode a list of sentences, preserving order."""
        out: List[str] = []
        for i in range(0, len(lines), batch_size):
            chunk = lines[i:i + batch_size]
            src = self.prepare_source(chunk)
            id_seqs, _ = self.model.greedy_decode(src)
            for ids in id_seqs:
                surface = [self.tgt_vocab.symbol(t) for t in ids]
                out.append(segmentation.detokenize(surface, self.seg.tgt_mode))
        return out

    # -- persistence ----------------------------------------------------------

    def save(self, ckpt_dir: str) -> None:
        save_checkpoint(self.model, ckpt_dir)
        with open(os.path.join(ckpt_dir, "pipeline.json"), "w", encoding="utf-8") as f:
            f.write(json.dumps(dataclasses.asdict(self.seg), sort_keys=True, indent=2) + "\n")
        self.tgt_vocab.save(os.path.join(ckpt_dir, "tgt_vocab.txt"))
        if self.tgt_bpe is not None:
            self.tgt_bpe.save(os.path.join(ckpt_dir, "tgt_bpe.txt"))
        if self.src_vocab is not None:
            self.src_vocab.save(os.path.join(ckpt_dir, "src_vocab.txt"))
        if self.src_bpe is not None:
            self.src_bpe.save(os.path.join(ckpt_dir, "src_bpe.txt"))

    @classmethod
    def load(cls, ckpt_dir: str) -> "Pipeline":
        model = load_checkpoint(ckpt_dir)
        with open(os.path.join(ckpt_dir, "pipeline.json"), encoding="utf-8") as f:
            seg = SegmentationSpec(**json.load(f))
        tgt_vocab = segmentation.Vocab.load(os.path.join(ckpt_dir, "tgt_vocab.txt"))

        def maybe(path, loader):
            full = os.path.join(ckpt_dir, path)
            return loader(full) if os.path.exists(full) else None

        return cls(model=model, seg=seg, tgt_vocab=tgt_vocab,
                   tgt_bpe=maybe("tgt_bpe.txt", segmentation.BpeModel.load),
                   src_vocab=maybe("src_vocab.txt", segmentation.Vocab.load),
                   src_bpe=maybe("src_bpe.txt", segmentation.BpeModel.load))


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


def _make_batches(order: List[int], lengths: List[int],
                  budget: int) -> List[List[int]]:
    """Pack sentence indices (already length-sorted) into token-budget batches."""
    batches: List[List[int]] = []
    cur: List[int] = []
    cur_tokens = 0
    for idx in order:
        n = lengths[idx]
        if cur and cur_tokens + n > budget:
            batches.append(cur)
            cur, cur_tokens = [], 0
        cur.append(idx)
        cur_tokens += n
    if cur:
        batches.append(cur)
    return batches


def train_pipeline(pipe: Pipeline, train_pairs: Tuple[Sequence[str], Sequence[str]],
                   dev_pairs: Tuple[Sequence[str], Sequence[str]],
                   tcfg: TrainConfig,
                   metrics_path: Optional[str] = None) -> List[dict]:
    """Minibatch Adam on the label-smoothed loss; returns the metrics log.

    Sentences are grouped into batches by a target-token budget after a
    length sort; batch order is reshuffled every epoch from the training
    seed. Dev BLEU is computed every ``eval_every`` steps and at the end.
    Non-finite loss aborts with a diagnostic.
    """
    src_lines, tgt_lines = list(train_pairs[0]), list(train_pairs[1])
    dev_src, dev_tgt = list(dev_pairs[0]), list(dev_pairs[1])
    if not src_lines:
        raise ValueError("empty training corpus")

    lengths = [pipe.target_length(t) for t in tgt_lines]
    by_len = sorted(range(len(src_lines)), key=lambda i: (lengths[i], i))
    base_batches = _make_batches(by_len, lengths, tcfg.batch_tokens)

    opt = make_optimizer(pipe.model, tcfg.lr)
    metrics: List[dict] = []

    def log(entry: dict) -> None:
        metrics.append(entry)

    def eval_dev(step: int) -> float:
        hyps = pipe.translate(dev_src)
        bleu = corpus_bleu(hyps, dev_tgt).bleu
        log({"step": step, "dev_bleu": round(bleu, 4)})
        return bleu

    step = 0
    epoch = 0
    while step < tcfg.max_steps:
        epoch_rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence((tcfg.seed, epoch))))
        batch_order = epoch_rng.permutation(len(base_batches))
        for bi in batch_order:
            batch = base_batches[bi]
            src = pipe.prepare_source([src_lines[i] for i in batch])
            tgt_ids, tgt_mask = pipe.prepare_targets([tgt_lines[i] for i in batch])
            loss, dlogits, _ = pipe.model.forward_loss(src, tgt_ids, tgt_mask, train=True)
            if not np.isfinite(loss):
                raise StageError("train", f"non-finite loss {loss} at step {step + 1}")
            pipe.model.zero_grad()
            pipe.model.backward(dlogits)
            opt.step()
            step += 1
            log({"step": step, "loss": round(float(loss), 6)})
            if step % tcfg.eval_every == 0 and step < tcfg.max_steps:
                eval_dev(step)
            if step >= tcfg.max_steps:
                break
        epoch += 1
    eval_dev(step)

    if metrics_path is not None:
        with open(metrics_path, "w", encoding="utf-8") as f:
            for entry in metrics:
                f.write(json.dumps(entry, sort_keys=True) + "\n")
    return metrics


# ---------------------------------------------------------------------------
# Run orchestration
# ---------------------------------------------------------------------------


def _load_or_generate_corpora(cfg: RunConfig, run_dir: str):
    """Returns ((train_src, train_tgt), (dev_src, dev_tgt), (test_src, test_tgt))."""
    if cfg.task is not None:
        t = cfg.task
        splits = {}
        corpus_dir = os.path.join(run_dir, "corpus")
        os.makedirs(corpus_dir, exist_ok=True)
        for split_idx, (name, size) in enumerate(
                [("train", t.train_size), ("dev", t.dev_size), ("test", t.test_size)]):
            src, tgt = corpus_mod.gen_synthetic_corpus(t.kind, size, cfg.seed, split_idx)
            corpus_mod.write_lines(os.path.join(corpus_dir, f"{name}.src"), src)
            corpus_mod.write_lines(os.path.join(corpus_dir, f"{name}.tgt"), tgt)
            splits[name] = (src, tgt)
        return splits["train"], splits["dev"], splits["test"]
    c = cfg.corpus
    train = corpus_mod.read_parallel(c.train_src, c.train_tgt)
    dev = corpus_mod.read_parallel(c.dev_src, c.dev_tgt)
    if c.test_src and c.test_tgt:
        test = corpus_mod.read_parallel(c.test_src, c.test_tgt)
    else:
        test = dev
    return train, dev, test


def resolve_noise_table(spec: NoiseSweepSpec):
    """Load the table/marks for a sweep item; bundled defaults when unset.

    ``table`` may be a filesystem path or the bare name of a bundled file.
    """
    if spec.kind in ("swap", "cambridge"):
        return None
    default = "cyrillic_latin.tsv" if spec.kind == "mapchars" else "combining_marks.txt"
    ref = spec.table or default
    path = ref if os.path.exists(ref) else noise.builtin_table_path(ref)
    if not os.path.exists(path):
        raise FileNotFoundError(f"noise table {ref!r} not found (tried {path!r})")
    return noise.load_table(path) if spec.kind == "mapchars" else noise.load_marks(path)


def run(config_path: str) -> str:
    """Execute a full run from a config file; returns the run directory."""
    try:
        cfg = load_run_config(config_path)
    except Exception as exc:
        raise StageError("config", str(exc)) from exc

    run_dir = cfg.run_dir
    try:
        os.makedirs(run_dir, exist_ok=False)
        shutil.copy(config_path, os.path.join(run_dir, "config.json"))
    except OSError as exc:
        raise StageError("setup", str(exc)) from exc

    return _run_stages(cfg, run_dir)


def run_from_config(cfg: RunConfig) -> str:
    """Execute a run from an in-memory config (CLI-less entry point)."""
    run_dir = cfg.run_dir
    try:
        os.makedirs(run_dir, exist_ok=False)
        with open(os.path.join(run_dir, "config.json"), "w", encoding="utf-8") as f:
            f.write(serialize_run_config(cfg) + "\n")
    except OSError as exc:
        raise StageError("setup", str(exc)) from exc
    return _run_stages(cfg, run_dir)


def _run_stages(cfg: RunConfig, run_dir: str) -> str:
    try:
        train_pair, dev_pair, test_pair = _load_or_generate_corpora(cfg, run_dir)
    except StageError:
        raise
    except Exception as exc:
        raise StageError("corpus", str(exc)) from exc

    try:
        pipe = Pipeline.build(cfg, train_pair[0], train_pair[1])
        train_pipeline(pipe, train_pair, dev_pair, cfg.train,
                       metrics_path=os.path.join(run_dir, "metrics.jsonl"))
        pipe.save(os.path.join(run_dir, "checkpoint"))
    except StageError:
        raise
    except Exception as exc:
        raise StageError("train", str(exc)) from exc

    try:
        for spec in cfg.noise:
            table = resolve_noise_table(spec)
            curve = degradation_sweep(
                pipe.translate, test_pair[0], test_pair[1], spec.kind,
                seeds=spec.seeds, table=table, char_p=spec.char_p, ps=spec.ps,
                model_id=cfg.segmentation.src_mode)
            evaluation.write_curve_csv(
                curve, os.path.join(run_dir, f"curve_{spec.kind}.csv"))
            evaluation.write_curve_svg(
                [curve], os.path.join(run_dir, f"curve_{spec.kind}.svg"))
    except StageError:
        raise
    except Exception as exc:
        raise StageError("sweep", str(exc)) from exc
    return run_dir


# ---------------------------------------------------------------------------
# Hyperparameter grid sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepGrid:
    """Named axes over ModelConfig fields; window >= stride filters the grid."""

    axes: Dict[str, Tuple]

    def __post_init__(self):
        if not self.axes or any(len(v) == 0 for v in self.axes.values()):
            raise ValueError("every sweep axis needs at least one value")
        if not self.points():
            raise ValueError("no grid points survive the window >= stride constraint")

    def points(self) -> List[Dict[str, object]]:
        names = list(self.axes)
        combos = []
        for values in itertools.product(*(self.axes[n] for n in names)):
            point = dict(zip(names, values))
            window = point.get("window")
            stride = point.get("stride")
            if window is not None and stride is not None and window < stride:
                continue
            combos.append(point)
        return combos


def final_dev_bleu(metrics_path: str) -> Optional[float]:
    last = None
    with open(metrics_path, encoding="utf-8") as f:
        for line in f:
            entry = json.loads(line)
            if "dev_bleu" in entry:
                last = float(entry["dev_bleu"])
    return last


def sweep(grid: SweepGrid, base_cfg: RunConfig, out_dir: str) -> str:
    """One run per surviving grid point; aggregates final dev BLEU to CSV.

    Individual run failures leave an empty dev_bleu cell and the sweep
    continues. Returns the path of the results CSV.
    """
    os.makedirs(out_dir, exist_ok=True)
    names = list(grid.axes)
    rows = []
    for i, point in enumerate(grid.points()):
        tag = "_".join(f"{k}{v}" for k, v in point.items())
        sub_cfg = dataclasses.replace(
            base_cfg,
            run_dir=os.path.join(out_dir, f"run_{i:03d}_{tag}"),
            model={**base_cfg.model, **point},
        )
        cell = ""
        try:
            run_dir = run_from_config(sub_cfg)
            bleu = final_dev_bleu(os.path.join(run_dir, "metrics.jsonl"))
            if bleu is not None:
                cell = f"{bleu:.4f}"
        except Exception:
            pass  # recorded as a missing cell; the grid keeps going
        rows.append([str(point[n]) for n in names] + [cell])
    csv_path = os.path.join(out_dir, "sweep.csv")
    with open(csv_path, "w", encoding="utf-8") as f:
        f.write(",".join(names + ["dev_bleu"]) + "\n")
        for row in rows:
            f.write(",".join(row) + "\n")
    return csv_path
