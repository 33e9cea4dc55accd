"""Seeded token-level noise: adjacent swaps, interior scrambles, character
substitution through a confusable table, and combining-mark insertion.

Noise is applied per token (a token is a maximal non-whitespace run). Each
token is independently selected with probability ``p``; a selected token is
transformed if it is eligible for the configured kind, and left alone
otherwise. Whitespace between tokens is never touched.

Every sentence draws from its own random stream derived from (seed, sentence
index), so a corpus can be noised in parallel, in any order, or one line at a
time and the output is identical.
"""

from __future__ import annotations

import importlib.resources
import re
import unicodedata
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

KINDS = ("swap", "cambridge", "mapchars", "marks")

_WS_SPLIT = re.compile(r"(\s+)")


@dataclass(frozen=True)
class NoiseSpec:
    """What to inject: the noise kind, token probability, seed, and tables.

    ``table`` carries the character map for ``mapchars`` and the list of
    combining marks for ``marks``; the other kinds ignore it. ``char_p`` is
    the within-token per-character probability used by ``mapchars`` and
    ``marks`` (1.0 = every mappable character changes in a selected token).
    """

    kind: str
    p: float
    seed: int
    table: Optional[object] = None
    char_p: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}; expected one of {KINDS}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must be in [0, 1], got {self.p}")
        if not 0.0 <= self.char_p <= 1.0:
            raise ValueError(f"char_p must be in [0, 1], got {self.char_p}")
        if self.kind == "mapchars":
            if not self.table:
                raise ValueError("mapchars requires a non-empty character table")
            for src, dst in dict(self.table).items():
                if src == dst:
                    raise ValueError(f"table maps {src!r} to itself")
        if self.kind == "marks":
            if not self.table:
                raise ValueError("marks requires a non-empty mark list")

    @property
    def char_map(self) -> Dict[str, str]:
        return dict(self.table)

    @property
    def marks(self) -> List[str]:
        return list(self.table)


@dataclass
class NoiseReport:
    """Bookkeeping for one injection run.

    ``tokens_noised`` counts tokens that were both selected and eligible;
    ``effective_rate`` is their share of the eligible tokens (the achieved
    per-token noise rate, which converges to ``p`` on large corpora).
    """

    tokens_total: int = 0
    tokens_eligible: int = 0
    tokens_noised: int = 0

    @property
    def effective_rate(self) -> float:
        if self.tokens_eligible == 0:
            return 0.0
        return self.tokens_noised / self.tokens_eligible

    def merge(self, other: "NoiseReport") -> None:
        self.tokens_total += other.tokens_total
        self.tokens_eligible += other.tokens_eligible
        self.tokens_noised += other.tokens_noised

    def as_dict(self) -> dict:
        return {
            "tokens_total": self.tokens_total,
            "tokens_eligible": self.tokens_eligible,
            "tokens_noised": self.tokens_noised,
            "effective_rate": self.effective_rate,
        }


def sentence_stream(seed: int, sentence_index: int) -> np.random.Generator:
    """The random stream for one sentence of a corpus.

    Streams are derived from (seed, index), not by splitting one sequential
    stream, so sentence i's noise never depends on how many sentences came
    before it.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, sentence_index))))


# ---------------------------------------------------------------------------
# Per-word transforms. Eligibility is the dispatcher's job; these assume it.
# ---------------------------------------------------------------------------


def swap_word(word: str, rng: np.random.Generator) -> str:
    """Exchange one uniformly chosen adjacent codepoint pair (length >= 2)."""
    chars = list(word)
    i = int(rng.integers(len(chars) - 1))
    chars[i], chars[i + 1] = chars[i + 1], chars[i]
    return "".join(chars)


def cambridge_word(word: str, rng: np.random.Generator) -> str:
    """Scramble the interior, keeping the first and last codepoints fixed.

    The interior receives a uniformly sampled permutation, rejected until the
    resulting string differs from the original. Words whose interior has no
    distinct rearrangement (all interior codepoints equal) come back
    unchanged; words shorter than 4 codepoints are ineligible upstream.
    """
    chars = list(word)
    interior = chars[1:-1]
    if len(set(interior)) < 2:
        return word
    while True:
        perm = rng.permutation(len(interior))
        shuffled = [interior[j] for j in perm]
        if shuffled != interior:
            chars[1:-1] = shuffled
            return "".join(chars)


def map_chars(word: str, table: Dict[str, str], rng: np.random.Generator,
              char_p: float = 1.0) -> str:
    """Replace each codepoint that has a table entry with probability char_p."""
    out = []
    for ch in word:
        dst = table.get(ch)
        if dst is not None and rng.random() < char_p:
            out.append(dst)
        else:
            out.append(ch)
    return "".join(out)


def insert_marks(word: str, marks: Sequence[str], rng: np.random.Generator,
                 char_p: float = 1.0) -> str:
    """Insert one random combining mark after each base codepoint with
    probability char_p. The base codepoints survive as a subsequence."""
    out = []
    for ch in word:
        out.append(ch)
        if rng.random() < char_p:
            out.append(marks[int(rng.integers(len(marks)))])
    return "".join(out)


def strip_marks(text: str) -> str:
    """Remove combining codepoints; inverse of insert_marks on mark-free input."""
    return "".join(ch for ch in text if not unicodedata.combining(ch))


# ---------------------------------------------------------------------------
# Dispatcher
# ---------------------------------------------------------------------------


def _eligible(word: str, spec: NoiseSpec) -> bool:
    if spec.kind == "swap":
        return len(word) >= 2
    if spec.kind == "cambridge":
        return len(word) >= 4
    if spec.kind == "mapchars":
        table = spec.char_map
        return any(ch in table for ch in word)
    return len(word) >= 1  # marks


def _transform(word: str, spec: NoiseSpec, rng: np.random.Generator) -> str:
    if spec.kind == "swap":
        return swap_word(word, rng)
    if spec.kind == "cambridge":
        return cambridge_word(word, rng)
    if spec.kind == "mapchars":
        return map_chars(word, spec.char_map, rng, spec.char_p)
    return insert_marks(word, spec.marks, rng, spec.char_p)


def inject(text: str, spec: NoiseSpec, sentence_index: int = 0,
           rng: Optional[np.random.Generator] = None) -> Tuple[str, NoiseReport]:
    """Noise one sentence; returns the noised text and a NoiseReport.

    The Bernoulli(p) selection draw happens for every token, eligible or not,
    so a token's fate depends only on its position — not on the eligibility
    of its neighbors.
    """
    if rng is None:
        rng = sentence_stream(spec.seed, sentence_index)
    report = NoiseReport()
    parts = _WS_SPLIT.split(text)
    out = []
    for part in parts:
        if not part or part.isspace():
            out.append(part)
            continue
        report.tokens_total += 1
        eligible = _eligible(part, spec)
        if eligible:
            report.tokens_eligible += 1
        selected = rng.random() < spec.p
        if selected and eligible:
            report.tokens_noised += 1
            out.append(_transform(part, spec, rng))
        else:
            out.append(part)
    return "".join(out), report


def inject_corpus(lines: Iterable[str], spec: NoiseSpec,
                  start_index: int = 0) -> Tuple[List[str], NoiseReport]:
    """Noise a corpus line by line; line i uses the (seed, start_index+i) stream."""
    report = NoiseReport()
    out = []
    for i, line in enumerate(lines):
        noised, r = inject(line, spec, sentence_index=start_index + i)
        report.merge(r)
        out.append(noised)
    return out, report


# ---------------------------------------------------------------------------
# Table files: UTF-8 lines "FROM<TAB>TO" (mapchars) or one mark per line
# (marks); '#' starts a comment line, blank lines are skipped.
# ---------------------------------------------------------------------------


def load_table(path) -> Dict[str, str]:
    table: Dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 2 or not fields[0] or not fields[1]:
                raise ValueError(f"{path}:{lineno}: expected 'FROM<TAB>TO', got {line!r}")
            table[fields[0]] = fields[1]
    return table


def load_marks(path) -> List[str]:
    marks: List[str] = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            marks.append(line)
    return marks


def builtin_table_path(name: str) -> str:
    """Path of a table file shipped with the package (e.g. 'cyrillic_latin.tsv')."""
    ref = importlib.resources.files("pixelmt").joinpath(f"data/tables/{name}")
    return str(ref)
