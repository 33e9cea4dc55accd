"""Text-side segmentation: BPE training/application, BPE-dropout, character,
word, and overlapping character n-gram modes, plus the shared vocabulary.

Conventions fixed here and relied on everywhere else:

* Special ids: PAD=0, UNK=1, BOS=2, EOS=3.
* Word boundaries in BPE are carried by a separate end-of-word sentinel
  symbol ``</w>`` appended after each word's characters; merges may absorb
  it. Detokenization turns the sentinel back into a single space.
* BPE training breaks pair-frequency ties by the lexicographically smallest
  (left, right) pair, so merge lists are reproducible.

Round trips: for char, word, and BPE segmentation, detokenizing the surface
symbols reproduces the input exactly (word and BPE assume tokens separated
by single spaces, which is how all corpora here are written).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

PAD_ID, UNK_ID, BOS_ID, EOS_ID = 0, 1, 2, 3
PAD, UNK, BOS, EOS = "<pad>", "<unk>", "<s>", "</s>"
SPECIALS = (PAD, UNK, BOS, EOS)

EOW = "</w>"          # end-of-word sentinel symbol
NGRAM_PAD = "␣"  # '␣' fills the final short character n-gram window


class Vocab:
    """Symbol <-> id table with the four specials pinned at ids 0-3."""

    def __init__(self, symbols: Sequence[str]):
        if tuple(symbols[:4]) != SPECIALS:
            raise ValueError(f"vocab must start with specials {SPECIALS}")
        self.symbols: List[str] = list(symbols)
        self._index: Dict[str, int] = {s: i for i, s in enumerate(self.symbols)}
        if len(self._index) != len(self.symbols):
            raise ValueError("duplicate symbols in vocab")

    @classmethod
    def from_content_symbols(cls, content: Iterable[str]) -> "Vocab":
        """Specials followed by the given content symbols in sorted order."""
        uniq = sorted(set(content) - set(SPECIALS))
        return cls(list(SPECIALS) + uniq)

    def __len__(self) -> int:
        return len(self.symbols)

    def id(self, symbol: str) -> int:
        return self._index.get(symbol, UNK_ID)

    def ids(self, symbols: Iterable[str]) -> List[int]:
        idx = self._index
        return [idx.get(s, UNK_ID) for s in symbols]

    def symbol(self, i: int) -> str:
        return self.symbols[i]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for s in self.symbols:
                f.write(s + "\n")

    @classmethod
    def load(cls, path) -> "Vocab":
        with open(path, encoding="utf-8") as f:
            symbols = f.read().split("\n")
        if symbols and symbols[-1] == "":
            symbols.pop()
        return cls(symbols)


@dataclass
class TokenSequence:
    """Parallel id/surface views of one segmented sentence."""

    ids: List[int]
    surface: List[str]

    def __len__(self) -> int:
        return len(self.ids)


# ---------------------------------------------------------------------------
# BPE
# ---------------------------------------------------------------------------


@dataclass
class BpeModel:
    """An ordered merge list plus the character inventory it was learned on.

    ``merges`` is in learned order; applying any prefix of it is valid.
    Models loaded from a merge file have no corpus to recover the character
    inventory from, so their ``base_chars`` are the codepoints appearing in
    the merges; characters outside it still segment fine (they pass through
    as single-character symbols) but map to UNK ids under the derived vocab.
    """

    merges: List[Tuple[str, str]]
    base_chars: Set[str]
    _ranks: Dict[Tuple[str, str], int] = field(default_factory=dict, repr=False)
    _apply_cache: Dict[str, Tuple[str, ...]] = field(default_factory=dict, repr=False)
    _vocab: Optional[Vocab] = field(default=None, repr=False)

    def __post_init__(self):
        if not self._ranks:
            self._ranks = {pair: r for r, pair in enumerate(self.merges)}

    def producible_symbols(self) -> Set[str]:
        return set(self.base_chars) | {EOW} | {l + r for l, r in self.merges}

    def vocab(self) -> Vocab:
        if self._vocab is None:
            self._vocab = Vocab.from_content_symbols(self.producible_symbols())
        return self._vocab

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(f"bpe-v1 {len(self.merges)}\n")
            for left, right in self.merges:
                f.write(f"{left}\t{right}\n")

    @classmethod
    def load(cls, path) -> "BpeModel":
        with open(path, encoding="utf-8") as f:
            header = f.readline().rstrip("\n")
            fields = header.split()
            if len(fields) != 2 or fields[0] != "bpe-v1":
                raise ValueError(f"{path}: bad BPE model header {header!r}")
            count = int(fields[1])
            merges = []
            for line in f:
                line = line.rstrip("\n")
                if not line:
                    continue
                left, sep, right = line.partition("\t")
                if not sep:
                    raise ValueError(f"{path}: bad merge line {line!r}")
                merges.append((left, right))
        if len(merges) != count:
            raise ValueError(
                f"{path}: header says {count} merges, file has {len(merges)}"
            )
        base_chars = {ch for pair in merges for part in pair for ch in part}
        base_chars.discard("")
        return cls(merges=merges, base_chars=base_chars)


def _word_symbols(word: str) -> List[str]:
    return list(word) + [EOW]


def _merge_once(symbols: List[str], left: str, right: str) -> List[str]:
    """Replace non-overlapping (left, right) occurrences, left to right."""
    out = []
    j = 0
    n = len(symbols)
    while j < n:
        if j + 1 < n and symbols[j] == left and symbols[j + 1] == right:
            out.append(left + right)
            j += 2
        else:
            out.append(symbols[j])
            j += 1
    return out


def bpe_train(corpus: Iterable[str], merge_count: int) -> BpeModel:
    """Learn ``merge_count`` greedy highest-frequency merges over word counts.

    Pair frequency counts every adjacent symbol position, weighted by word
    frequency. Ties go to the lexicographically smallest (left, right) pair.
    Training stops early if no adjacent pair remains.
    """
    if merge_count < 0:
        raise ValueError("merge_count must be >= 0")
    word_freqs = Counter()
    for line in corpus:
        word_freqs.update(line.split())
    if not word_freqs:
        raise ValueError("empty corpus: no words to train on")

    base_chars = {ch for w in word_freqs for ch in w}
    words: List[List[str]] = [_word_symbols(w) for w in word_freqs]
    freqs: List[int] = list(word_freqs.values())

    # Incremental pair bookkeeping: global counts plus, per pair, the set of
    # word indices currently containing it (entries may go stale; a zero or
    # missing count is the source of truth).
    pair_counts: Counter = Counter()
    pair_words: Dict[Tuple[str, str], Set[int]] = {}
    for i, syms in enumerate(words):
        f = freqs[i]
        for a, b in zip(syms, syms[1:]):
            pair_counts[(a, b)] += f
            pair_words.setdefault((a, b), set()).add(i)

    merges: List[Tuple[str, str]] = []
    for _ in range(merge_count):
        best_count = 0
        best_pair = None
        for pair, c in pair_counts.items():
            if c > best_count or (c == best_count and best_pair is not None and pair < best_pair):
                best_count, best_pair = c, pair
        if best_pair is None:
            break
        merges.append(best_pair)
        left, right = best_pair
        for i in sorted(pair_words.get(best_pair, ())):
            syms = words[i]
            # Stale index entries are possible; skip words without the pair.
            if not any(a == left and b == right for a, b in zip(syms, syms[1:])):
                continue
            f = freqs[i]
            for a, b in zip(syms, syms[1:]):
                pair_counts[(a, b)] -= f
                if pair_counts[(a, b)] <= 0:
                    del pair_counts[(a, b)]
            new_syms = _merge_once(syms, left, right)
            words[i] = new_syms
            for a, b in zip(new_syms, new_syms[1:]):
                pair_counts[(a, b)] += f
                pair_words.setdefault((a, b), set()).add(i)
        pair_counts.pop(best_pair, None)
        pair_words.pop(best_pair, None)

    return BpeModel(merges=merges, base_chars=base_chars)


def bpe_word_symbols(word: str, model: BpeModel) -> Tuple[str, ...]:
    """Deterministic BPE segmentation of one word (cached on the model).

    Applies, repeatedly, the earliest-learned merge present anywhere in the
    current symbol sequence. This is equivalent to replaying the full merge
    list in learned order: a merge whose parts include a later merge's output
    cannot exist, so processing by rank never misses an opportunity.
    """
    cached = model._apply_cache.get(word)
    if cached is not None:
        return cached
    ranks = model._ranks
    symbols = _word_symbols(word)
    while len(symbols) > 1:
        best_rank = None
        best_pair = None
        for a, b in zip(symbols, symbols[1:]):
            r = ranks.get((a, b))
            if r is not None and (best_rank is None or r < best_rank):
                best_rank, best_pair = r, (a, b)
        if best_pair is None:
            break
        symbols = _merge_once(symbols, *best_pair)
    result = tuple(symbols)
    model._apply_cache[word] = result
    return result


def bpe_dropout_word_symbols(word: str, model: BpeModel, drop_p: float,
                             rng: np.random.Generator) -> Tuple[str, ...]:
    """BPE with per-occurrence merge dropout.

    Merges replay in learned order; each individual merge opportunity is
    skipped with probability ``drop_p`` (draws happen left to right within a
    merge, merges in learned order). drop_p=0 reproduces the deterministic
    segmentation; drop_p=1 leaves every word as characters + sentinel.
    """
    symbols = _word_symbols(word)
    word_text = word + EOW
    for left, right in model.merges:
        if len(symbols) < 2:
            break
        if left + right not in word_text:
            continue  # the merged span could never occur in this word
        out = []
        j = 0
        n = len(symbols)
        while j < n:
            if (j + 1 < n and symbols[j] == left and symbols[j + 1] == right
                    and rng.random() >= drop_p):
                out.append(left + right)
                j += 2
            else:
                out.append(symbols[j])
                j += 1
        symbols = out
    return tuple(symbols)


def _words_to_sequence(words_symbols: List[Tuple[str, ...]],
                       vocab: Optional[Vocab],
                       add_specials: bool) -> TokenSequence:
    surface: List[str] = []
    for syms in words_symbols:
        surface.extend(syms)
    if add_specials:
        surface = [BOS] + surface + [EOS]
    if vocab is None:
        vocab = Vocab.from_content_symbols(s for s in surface if s not in SPECIALS)
    return TokenSequence(ids=vocab.ids(surface), surface=surface)


def bpe_apply(text: str, model: BpeModel, vocab: Optional[Vocab] = None,
              add_specials: bool = False) -> TokenSequence:
    """Deterministic BPE segmentation of a whitespace-tokenized sentence.

    When ``vocab`` is omitted, ids come from the model's derived vocabulary.
    """
    if vocab is None:
        vocab = model.vocab()
    words = [bpe_word_symbols(w, model) for w in text.split()]
    return _words_to_sequence(words, vocab, add_specials)


def bpe_dropout_apply(text: str, model: BpeModel, drop_p: float,
                      rng: np.random.Generator, vocab: Optional[Vocab] = None,
                      add_specials: bool = False) -> TokenSequence:
    """BPE-dropout segmentation of a sentence; see bpe_dropout_word_symbols."""
    if not 0.0 <= drop_p <= 1.0:
        raise ValueError(f"drop_p must be in [0, 1], got {drop_p}")
    if vocab is None:
        vocab = model.vocab()
    words = [bpe_dropout_word_symbols(w, model, drop_p, rng) for w in text.split()]
    return _words_to_sequence(words, vocab, add_specials)


# ---------------------------------------------------------------------------
# Character n-grams, characters, words
# ---------------------------------------------------------------------------


def char_ngram_symbols(text: str, n: int, stride: int) -> List[str]:
    """Overlapping character windows of n codepoints every ``stride``.

    The window count follows the image slicer's rule: one window when the
    text is no longer than n, otherwise ceil((len-n)/stride)+1, the last
    window padded with '␣'. Empty text yields one all-pad window.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 1 <= stride <= n:
        raise ValueError("stride must satisfy 1 <= stride <= n")
    length = len(text)
    if length <= n:
        count = 1
    else:
        count = math.ceil((length - n) / stride) + 1
    padded = text + NGRAM_PAD * ((count - 1) * stride + n - length)
    return [padded[i * stride : i * stride + n] for i in range(count)]


def char_ngrams(text: str, n: int, stride: int,
                vocab: Optional[Vocab] = None,
                add_specials: bool = False) -> TokenSequence:
    symbols = char_ngram_symbols(text, n, stride)
    return _words_to_sequence([tuple(symbols)], vocab, add_specials)


def segment(text: str, mode: str, *, model: Optional[BpeModel] = None,
            drop_p: float = 0.0, rng: Optional[np.random.Generator] = None,
            n: int = 3, stride: int = 1, vocab: Optional[Vocab] = None,
            add_specials: bool = True) -> TokenSequence:
    """Dispatch over the segmentation modes; adds BOS/EOS by default.

    Without an explicit ``vocab``, char/word/ngram ids are built from the
    text itself and are only comparable within the one call; pass the corpus
    vocabulary for anything that trains or decodes.
    """
    if mode == "bpe":
        if model is None:
            raise ValueError("bpe mode requires a model")
        if drop_p > 0.0:
            if rng is None:
                raise ValueError("bpe dropout requires an rng")
            return bpe_dropout_apply(text, model, drop_p, rng, vocab, add_specials)
        return bpe_apply(text, model, vocab, add_specials)
    if mode == "char":
        return _words_to_sequence([tuple(text)], vocab, add_specials)
    if mode == "word":
        return _words_to_sequence([tuple(text.split())], vocab, add_specials)
    if mode == "ngram":
        return char_ngrams(text, n, stride, vocab, add_specials)
    raise ValueError(f"unknown segmentation mode {mode!r}")


def detokenize(surface: Iterable[str], mode: str) -> str:
    """Invert segmentation back to text (char/word/bpe only).

    Special symbols are skipped. BPE joins symbols and turns each end-of-word
    sentinel into a single space; word mode joins with single spaces; char
    mode concatenates.
    """
    content = [s for s in surface if s not in SPECIALS]
    if mode == "char":
        return "".join(content)
    if mode == "word":
        return " ".join(content)
    if mode == "bpe":
        joined = "".join(content)
        out = joined.replace(EOW, " ")
        if out.endswith(" "):
            out = out[:-1]
        return out
    raise ValueError(f"mode {mode!r} does not support detokenization")


def corpus_vocab(lines: Iterable[str], mode: str, *,
                 model: Optional[BpeModel] = None,
                 n: int = 3, stride: int = 1) -> Vocab:
    """The symbol vocabulary a corpus induces under a segmentation mode."""
    if mode == "bpe":
        if model is None:
            raise ValueError("bpe mode requires a model")
        return model.vocab()
    symbols: Set[str] = set()
    if mode == "char":
        for line in lines:
            symbols.update(line)
    elif mode == "word":
        for line in lines:
            symbols.update(line.split())
    elif mode == "ngram":
        for line in lines:
            symbols.update(char_ngram_symbols(line, n, stride))
    else:
        raise ValueError(f"unknown segmentation mode {mode!r}")
    return Vocab.from_content_symbols(symbols)
