"""Command-line interface.

Subcommands: render, slice, noise, bpe {train,apply}, gen-corpus, train,
translate, evaluate, sweep, pixel-stats. Text flows through stdin/stdout as
UTF-8 one sentence per line; reports and diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from typing import List, Optional

import numpy as np

from . import corpus as corpus_mod
from . import evaluation, noise, render, runner, segmentation
from .config import load_run_config
from .slicer import SliceConfig, slice_pixels


def _read_stdin_lines() -> List[str]:
    data = sys.stdin.read()
    lines = data.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def _render_config(args) -> render.RenderConfig:
    return render.RenderConfig(font_path=args.font, font_size=args.font_size,
                               min_width=getattr(args, "window", None) or 1)


def _add_font_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--font", default=None, help="font file (default: bundled face)")
    p.add_argument("--font-size", type=int, default=10)


# -- subcommand handlers ------------------------------------------------------


def cmd_render(args) -> int:
    cfg = _render_config(args)
    os.makedirs(args.out_dir, exist_ok=True)
    font = render.get_font(cfg)
    for i, line in enumerate(_read_stdin_lines()):
        img = render.render_line(line, cfg, font)
        path = os.path.join(args.out_dir, f"line_{i:04d}.pgm")
        render.write_pgm(img.pixels, path)
        print(f"{path}\t{img.height}\t{img.width}")
    return 0


def cmd_slice(args) -> int:
    cfg = _render_config(args)
    scfg = SliceConfig(window=args.window, stride=args.stride)
    font = render.get_font(cfg)
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
    for i, line in enumerate(_read_stdin_lines()):
        img = render.render_line(line, cfg, font)
        slices = slice_pixels(img.pixels, scfg)
        print(f"{i}\t{slices.shape[0]}\t{slices.shape[1]}x{slices.shape[2]}")
        if args.out_dir:
            for j in range(slices.shape[0]):
                render.write_pgm(slices[j],
                                 os.path.join(args.out_dir, f"line_{i:04d}_slice_{j:03d}.pgm"))
    return 0


def cmd_noise(args) -> int:
    table = None
    if args.kind == "mapchars":
        path = args.table or noise.builtin_table_path("cyrillic_latin.tsv")
        if not os.path.exists(path):
            path = noise.builtin_table_path(args.table)
        table = noise.load_table(path)
    elif args.kind == "marks":
        path = args.table or noise.builtin_table_path("combining_marks.txt")
        if not os.path.exists(path):
            path = noise.builtin_table_path(args.table)
        table = noise.load_marks(path)
    spec = noise.NoiseSpec(kind=args.kind, p=args.p, seed=args.seed, table=table,
                           char_p=args.char_p)
    noised, report = noise.inject_corpus(_read_stdin_lines(), spec)
    for line in noised:
        print(line)
    print(json.dumps(report.as_dict(), sort_keys=True), file=sys.stderr)
    return 0


def cmd_bpe_train(args) -> int:
    model = segmentation.bpe_train(_read_stdin_lines(), args.merges)
    model.save(args.out)
    print(f"trained {len(model.merges)} merges over "
          f"{len(model.base_chars)} base characters -> {args.out}", file=sys.stderr)
    return 0


def cmd_bpe_apply(args) -> int:
    model = segmentation.BpeModel.load(args.model)
    rng = None
    if args.dropout > 0:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(args.seed)))
    for line in _read_stdin_lines():
        if args.dropout > 0:
            seq = segmentation.bpe_dropout_apply(line, model, args.dropout, rng)
        else:
            seq = segmentation.bpe_apply(line, model)
        print(" ".join(seq.surface))
    return 0


def cmd_gen_corpus(args) -> int:
    os.makedirs(args.out_dir, exist_ok=True)
    sizes = [("train", args.size), ("dev", args.dev_size), ("test", args.test_size)]
    for split_idx, (name, size) in enumerate(sizes):
        src, tgt = corpus_mod.gen_synthetic_corpus(args.task, size, args.seed, split_idx)
        corpus_mod.write_lines(os.path.join(args.out_dir, f"{name}.src"), src)
        corpus_mod.write_lines(os.path.join(args.out_dir, f"{name}.tgt"), tgt)
        print(f"{name}: {size} pairs", file=sys.stderr)
    return 0


def cmd_train(args) -> int:
    run_dir = runner.run(args.config)
    print(run_dir)
    return 0


def cmd_translate(args) -> int:
    pipe = runner.Pipeline.load(args.checkpoint)
    for line in pipe.translate(_read_stdin_lines(), batch_size=args.batch_size):
        print(line)
    return 0


def cmd_evaluate(args) -> int:
    pipe = runner.Pipeline.load(args.checkpoint)
    src = corpus_mod.read_lines(args.src)
    ref = corpus_mod.read_lines(args.ref)
    hyps = pipe.translate(src, batch_size=args.batch_size)
    score = evaluation.corpus_bleu(hyps, ref)
    print(json.dumps({
        "bleu": round(score.bleu, 4),
        "precisions": [round(p, 6) for p in score.precisions],
        "brevity_penalty": round(score.brevity_penalty, 6),
        "hyp_len": score.lengths[0],
        "ref_len": score.lengths[1],
    }, sort_keys=True))
    return 0


def cmd_sweep(args) -> int:
    base_cfg = load_run_config(args.config)
    axes = {k: tuple(v) for k, v in json.loads(args.axes).items()}
    grid = runner.SweepGrid(axes=axes)
    csv_path = runner.sweep(grid, base_cfg, args.out_dir)
    print(csv_path)
    return 0


def cmd_pixel_stats(args) -> int:
    cfg = _render_config(args)
    stats = render.corpus_pixel_stats(_read_stdin_lines(), cfg)
    print(json.dumps({
        "avg_density": round(stats.avg_density, 6),
        "nonwhite_fraction": round(stats.nonwhite_fraction, 6),
    }, sort_keys=True))
    return 0


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="pixelmt",
        description="Pixel-rendered source text for small translation models.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="rasterize stdin lines to PGM images")
    _add_font_args(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("slice", help="render and slice stdin lines")
    _add_font_args(p)
    p.add_argument("--window", type=int, required=True)
    p.add_argument("--stride", type=int, required=True)
    p.add_argument("--out-dir", default=None, help="also dump slice PGMs here")
    p.set_defaults(func=cmd_slice)

    p = sub.add_parser("noise", help="inject token-level noise into stdin")
    p.add_argument("--kind", choices=noise.KINDS, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--table", default=None,
                   help="table file, or bundled table name (mapchars/marks)")
    p.add_argument("--char-p", type=float, default=1.0)
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("bpe", help="subword model operations")
    bpe_sub = p.add_subparsers(dest="bpe_command", required=True)
    pt = bpe_sub.add_parser("train", help="learn merges from stdin corpus")
    pt.add_argument("--merges", type=int, required=True)
    pt.add_argument("--out", required=True)
    pt.set_defaults(func=cmd_bpe_train)
    pa = bpe_sub.add_parser("apply", help="segment stdin with a merge file")
    pa.add_argument("--model", required=True)
    pa.add_argument("--dropout", type=float, default=0.0)
    pa.add_argument("--seed", type=int, default=0)
    pa.set_defaults(func=cmd_bpe_apply)

    p = sub.add_parser("gen-corpus", help="write a synthetic parallel corpus")
    p.add_argument("--task", choices=corpus_mod.TASKS, required=True)
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--dev-size", type=int, default=200)
    p.add_argument("--test-size", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("train", help="execute a full run from a config file")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("translate", help="greedy-decode stdin with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--batch-size", type=int, default=64)
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("evaluate", help="BLEU of a checkpoint on a test corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--src", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--batch-size", type=int, default=64)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="grid sweep over model fields")
    p.add_argument("--config", required=True)
    p.add_argument("--axes", required=True,
                   help='JSON object, e.g. {"window": [20, 25], "stride": [10, 15]}')
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("pixel-stats", help="ink statistics of rendered stdin")
    _add_font_args(p)
    p.set_defaults(func=cmd_pixel_stats)

    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except runner.StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
