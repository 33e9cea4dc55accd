"""Synthetic parallel corpora (copy, reverse, mapped-lexicon) and corpus IO.

A parallel corpus is two UTF-8 files, one sentence per line, aligned by line
number. All generation is seeded: a task's vocabulary/lexicon depends only on
the seed, while the drawn sentences additionally depend on a ``split`` index,
so train/dev/test splits share the lexicon but not the draws.
"""

from __future__ import annotations

import string
from typing import Dict, List, Sequence, Tuple

import numpy as np

TASKS = ("copy", "reverse", "mapped-lexicon")

COPY_ALPHABET = tuple(string.ascii_lowercase[:20])  # 20 single-char symbols

LEXICON_SIZE = 40
WORD_LEN_RANGE = (4, 8)
SENT_LEN_RANGE = (3, 9)

_LEXICON_STREAM = 0x5EED  # lexicon depends on the seed only, never the split


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, stream))))


def _random_word(rng: np.random.Generator, taken: set) -> str:
    lo, hi = WORD_LEN_RANGE
    while True:
        n = int(rng.integers(lo, hi + 1))
        word = "".join(chr(ord("a") + int(c)) for c in rng.integers(0, 26, size=n))
        if word not in taken:
            taken.add(word)
            return word


def mapped_lexicon(seed: int, size: int = LEXICON_SIZE) -> Dict[str, str]:
    """The task's bijective source->target word map, fixed by the seed."""
    rng = _rng(seed, _LEXICON_STREAM)
    taken: set = set()
    sources = [_random_word(rng, taken) for _ in range(size)]
    targets = [_random_word(rng, taken) for _ in range(size)]
    return dict(zip(sources, targets))


def gen_synthetic_corpus(kind: str, size: int, seed: int,
                         split: int = 0) -> Tuple[List[str], List[str]]:
    """Generate ``size`` aligned (source, target) sentence pairs.

    copy: target = source over the 20-letter alphabet. reverse: target is the
    token-reversed source. mapped-lexicon: target tokens are the bijective
    dictionary image of the source tokens, position by position.
    """
    if kind not in TASKS:
        raise ValueError(f"unknown task {kind!r}; expected one of {TASKS}")
    if size < 1:
        raise ValueError("size must be >= 1")
    rng = _rng(seed, split)
    lo, hi = SENT_LEN_RANGE
    src_lines: List[str] = []
    tgt_lines: List[str] = []
    if kind == "mapped-lexicon":
        lex = mapped_lexicon(seed)
        words = sorted(lex)
        for _ in range(size):
            n = int(rng.integers(lo, hi + 1))
            toks = [words[int(i)] for i in rng.integers(0, len(words), size=n)]
            src_lines.append(" ".join(toks))
            tgt_lines.append(" ".join(lex[t] for t in toks))
        return src_lines, tgt_lines
    for _ in range(size):
        n = int(rng.integers(lo, hi + 1))
        toks = [COPY_ALPHABET[int(i)]
                for i in rng.integers(0, len(COPY_ALPHABET), size=n)]
        src_lines.append(" ".join(toks))
        if kind == "copy":
            tgt_lines.append(src_lines[-1])
        else:  # reverse
            tgt_lines.append(" ".join(reversed(toks)))
    return src_lines, tgt_lines


def read_lines(path) -> List[str]:
    with open(path, encoding="utf-8") as f:
        lines = f.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def write_lines(path, lines: Sequence[str]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for line in lines:
            f.write(line + "\n")


def read_parallel(src_path, tgt_path) -> Tuple[List[str], List[str]]:
    src = read_lines(src_path)
    tgt = read_lines(tgt_path)
    if len(src) != len(tgt):
        raise ValueError(
            f"corpus misaligned: {src_path} has {len(src)} lines, "
            f"{tgt_path} has {len(tgt)}")
    return src, tgt
