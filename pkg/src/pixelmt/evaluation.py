"""Corpus BLEU and the robustness harness: BLEU-vs-noise-probability
degradation curves, per-curve CSV/SVG emission, and Δ-tables between curves.

BLEU here is standard 4-gram corpus BLEU over whitespace-tokenized lines with
an exponential brevity penalty. Smoothing is pinned: zero n-gram match counts
are replaced by 1e-9 inside the log-mean, so scores are small-positive rather
than zero or NaN when an order has no overlap. Scores are internal
comparisons between models evaluated identically, nothing more.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .noise import NoiseSpec, inject_corpus

_SMOOTH = 1e-9
DEFAULT_PS = tuple(round(0.1 * i, 1) for i in range(11))  # 0.0 … 1.0


@dataclass(frozen=True)
class BleuScore:
    bleu: float
    precisions: Tuple[float, float, float, float]
    brevity_penalty: float
    lengths: Tuple[int, int]  # (hypothesis, reference)

    def __post_init__(self):
        if not 0.0 <= self.bleu <= 100.0:
            raise ValueError(f"BLEU out of range: {self.bleu}")


def _ngrams(tokens: List[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(hyps: Sequence[str], refs: Sequence[str]) -> BleuScore:
    """4-gram corpus BLEU with exponential brevity penalty.

    Inputs are pre-tokenized lines; tokens are whitespace-separated. Counts
    are pooled over the corpus (modified n-gram precision), then combined as
    100 * BP * exp(mean log p_n).
    """
    if len(hyps) != len(refs):
        raise ValueError(f"line count mismatch: {len(hyps)} hyps vs {len(refs)} refs")
    if not hyps:
        raise ValueError("empty corpus")
    matches = [0, 0, 0, 0]
    totals = [0, 0, 0, 0]
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hyps, refs):
        h = hyp.split()
        r = ref.split()
        hyp_len += len(h)
        ref_len += len(r)
        for n in range(1, 5):
            hc = _ngrams(h, n)
            if not hc:
                continue
            rc = _ngrams(r, n)
            totals[n - 1] += sum(hc.values())
            matches[n - 1] += sum(min(c, rc[g]) for g, c in hc.items())
    precisions = tuple(
        max(m, _SMOOTH) / t if t > 0 else _SMOOTH
        for m, t in zip(matches, totals)
    )
    if hyp_len == 0:
        bp = 0.0
    elif hyp_len >= ref_len:
        bp = 1.0
    else:
        bp = math.exp(1.0 - ref_len / hyp_len)
    bleu = 100.0 * bp * math.exp(sum(math.log(p) for p in precisions) / 4.0)
    return BleuScore(bleu=bleu, precisions=precisions, brevity_penalty=bp,
                     lengths=(hyp_len, ref_len))


# ---------------------------------------------------------------------------
# Degradation curves
# ---------------------------------------------------------------------------


@dataclass
class DegradationCurve:
    """Mean BLEU per noise probability for one model and noise kind.

    ``points`` holds (p, mean bleu) on a strictly increasing p grid;
    ``rows`` keeps the per-seed scores behind each mean for CSV emission.
    """

    noise_kind: str
    points: List[Tuple[float, float]]
    model_id: str
    rows: List[Tuple[float, float, str, str, int]] = field(default_factory=list)

    def __post_init__(self):
        ps = [p for p, _ in self.points]
        if any(b - a <= 0 for a, b in zip(ps, ps[1:])):
            raise ValueError("p grid must be strictly increasing")
        for _, b in self.points:
            if not 0.0 <= b <= 100.0:
                raise ValueError(f"BLEU out of range in curve: {b}")

    def bleu_at(self, p: float) -> float:
        for q, b in self.points:
            if q == p:
                return b
        raise KeyError(f"no point at p={p}")


def noise_stream_seed(run_seed: int, p: float) -> int:
    """Stable per-(run, p) noise seed so curve points share no draws."""
    ss = np.random.SeedSequence((run_seed, int(round(p * 1000))))
    return int(ss.generate_state(1, np.uint64)[0])


def degradation_sweep(translate_fn: Callable[[List[str]], List[str]],
                      src_lines: Sequence[str], ref_lines: Sequence[str],
                      noise_kind: str, seeds: Sequence[int], *,
                      table: Optional[object] = None, char_p: float = 1.0,
                      ps: Sequence[float] = DEFAULT_PS,
                      model_id: str = "model") -> DegradationCurve:
    """Noise the source at each p, translate, and score; mean over seeds.

    The p=0 point is the clean score, computed once from the unmodified
    source. Each (seed, p) pair gets its own derived noise stream, and every
    sentence within it gets its own sub-stream, so scores are reproducible
    and independent across grid points.
    """
    src_lines = list(src_lines)
    ref_lines = list(ref_lines)
    points: List[Tuple[float, float]] = []
    rows: List[Tuple[float, float, str, str, int]] = []
    clean_bleu: Optional[float] = None
    for p in ps:
        if p == 0.0:
            clean_bleu = corpus_bleu(translate_fn(src_lines), ref_lines).bleu
            points.append((0.0, clean_bleu))
            for seed in seeds:
                rows.append((0.0, clean_bleu, model_id, noise_kind, seed))
            continue
        scores = []
        for seed in seeds:
            spec = NoiseSpec(kind=noise_kind, p=p, seed=noise_stream_seed(seed, p),
                             table=table, char_p=char_p)
            noised, _ = inject_corpus(src_lines, spec)
            bleu = corpus_bleu(translate_fn(noised), ref_lines).bleu
            scores.append(bleu)
            rows.append((p, bleu, model_id, noise_kind, seed))
        points.append((p, float(np.mean(scores))))
    return DegradationCurve(noise_kind=noise_kind, points=points,
                            model_id=model_id, rows=rows)


def delta_table(curve_a: DegradationCurve,
                curve_b: DegradationCurve) -> List[Tuple[float, float]]:
    """Per-p BLEU difference (a minus b); curves must share their p grid."""
    ps_a = [p for p, _ in curve_a.points]
    ps_b = [p for p, _ in curve_b.points]
    if ps_a != ps_b:
        raise ValueError(f"p grids differ: {ps_a} vs {ps_b}")
    return [(p, a - b) for (p, a), (_, b) in zip(curve_a.points, curve_b.points)]


def relative_degradation(curve: DegradationCurve, p: float) -> float:
    """(clean - bleu(p)) / clean, in [0, 1] when the model degrades."""
    clean = curve.bleu_at(0.0)
    if clean <= 0:
        return 0.0
    return (clean - curve.bleu_at(p)) / clean


# ---------------------------------------------------------------------------
# File emission
# ---------------------------------------------------------------------------


def write_curve_csv(curve: DegradationCurve, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("p,bleu,model,kind,seed\n")
        for p, bleu, model_id, kind, seed in curve.rows:
            f.write(f"{p},{bleu:.6f},{model_id},{kind},{seed}\n")


def write_delta_csv(deltas: Sequence[Tuple[float, float]], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("p,delta\n")
        for p, d in deltas:
            f.write(f"{p},{d:.6f}\n")


def write_curve_svg(curves: Sequence[DegradationCurve], path,
                    title: str = "BLEU vs noise probability") -> None:
    """A minimal static line chart; one polyline per curve, BLEU 0-100."""
    width, height, margin = 480, 320, 45
    plot_w, plot_h = width - 2 * margin, height - 2 * margin

    def sx(p: float) -> float:
        return margin + p * plot_w

    def sy(b: float) -> float:
        return margin + (1.0 - b / 100.0) * plot_h

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="13">{title}</text>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" '
        f'stroke="black"/>',
    ]
    for i in range(0, 11, 2):
        p = i / 10.0
        parts.append(f'<text x="{sx(p)}" y="{height - margin + 16}" text-anchor="middle" '
                     f'font-size="10">{p}</text>')
    for b in (0, 25, 50, 75, 100):
        parts.append(f'<text x="{margin - 8}" y="{sy(b) + 3}" text-anchor="end" '
                     f'font-size="10">{b}</text>')
    for i, curve in enumerate(curves):
        color = colors[i % len(colors)]
        pts = " ".join(f"{sx(p):.1f},{sy(b):.1f}" for p, b in curve.points)
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     f'stroke-width="1.5"/>')
        parts.append(f'<text x="{width - margin}" y="{margin + 14 * (i + 1)}" '
                     f'text-anchor="end" font-size="11" fill="{color}">'
                     f'{curve.model_id} / {curve.noise_kind}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(parts) + "\n")
