import math

import numpy as np
import pytest

from pixelmt import evaluation as ev
from pixelmt.noise import NoiseSpec, inject_corpus


def test_identity_corpus_scores_100():
    lines = ["a b c d e", "f g h i", "j k l m n o"]
    score = ev.corpus_bleu(lines, lines)
    assert score.bleu == pytest.approx(100.0, abs=1e-9)
    assert score.brevity_penalty == 1.0
    assert all(p == pytest.approx(1.0) for p in score.precisions)


def test_short_hypothesis_brevity_case():
    # 4/4 matching n-grams everywhere, hyp 4 tokens vs ref 5:
    # BLEU = 100 * exp(1 - 5/4) = 77.8801.
    score = ev.corpus_bleu(["a b c d"], ["a b c d e"])
    assert score.bleu == pytest.approx(100.0 * math.exp(-0.25), abs=1e-9)
    assert round(score.bleu, 4) == 77.8801
    assert score.lengths == (4, 5)


def test_substitution_case():
    # hyp "a b c d e" vs ref "a b c d f": p = 4/5, 3/4, 2/3, 1/2; BP = 1.
    score = ev.corpus_bleu(["a b c d e"], ["a b c d f"])
    expect = 100.0 * (4 / 5 * 3 / 4 * 2 / 3 * 1 / 2) ** 0.25
    assert score.bleu == pytest.approx(expect, abs=1e-9)
    assert score.precisions == pytest.approx((0.8, 0.75, 2 / 3, 0.5))


def test_repeated_token_is_clipped():
    # "d" appears twice in the hypothesis but once in the reference; the
    # second occurrence must not count (modified precision).
    score = ev.corpus_bleu(["a b c d d"], ["a b c d"])
    assert score.precisions[0] == pytest.approx(4 / 5)
    assert score.brevity_penalty == 1.0


def test_long_reference_brevity_penalty():
    # Perfect sub-match, hyp half the reference length: BP = exp(1-2) = e^-1.
    score = ev.corpus_bleu(["a b c d"], ["a b c d e f g h"])
    assert score.brevity_penalty == pytest.approx(math.exp(-1.0), abs=1e-12)
    assert score.bleu == pytest.approx(100.0 * math.exp(-1.0), abs=1e-9)


def test_zero_overlap_is_tiny_but_positive():
    score = ev.corpus_bleu(["w x y z"], ["a b c d"])
    assert 0.0 < score.bleu < 1e-6


def test_pooling_is_corpus_level_not_mean_of_sentences():
    hyps = ["a b c d e f g h i j", "x y"]
    refs = ["a b c d e f g h i j", "a b"]
    pooled = ev.corpus_bleu(hyps, refs)
    per_line = [ev.corpus_bleu([h], [r]).bleu for h, r in zip(hyps, refs)]
    mean = sum(per_line) / 2
    assert abs(pooled.bleu - mean) > 10.0  # pooled counts, not sentence means
    assert pooled.precisions[0] == pytest.approx((10 + 0) / 12)


def test_input_validation():
    with pytest.raises(ValueError):
        ev.corpus_bleu(["a"], ["a", "b"])
    with pytest.raises(ValueError):
        ev.corpus_bleu([], [])


def test_empty_hypothesis_scores_zero_bp():
    score = ev.corpus_bleu([""], ["a b"])
    assert score.brevity_penalty == 0.0
    assert score.bleu == 0.0


def test_curve_requires_increasing_grid():
    with pytest.raises(ValueError):
        ev.DegradationCurve("swap", [(0.0, 50.0), (0.0, 40.0)], "m")
    with pytest.raises(ValueError):
        ev.DegradationCurve("swap", [(0.5, 50.0), (0.1, 40.0)], "m")
    curve = ev.DegradationCurve("swap", [(0.0, 50.0), (1.0, 40.0)], "m")
    assert curve.bleu_at(1.0) == 40.0
    with pytest.raises(KeyError):
        curve.bleu_at(0.3)


def test_relative_degradation_arithmetic():
    curve = ev.DegradationCurve("swap", [(0.0, 80.0), (0.5, 60.0), (1.0, 20.0)], "m")
    assert ev.relative_degradation(curve, 0.5) == pytest.approx(0.25)
    assert ev.relative_degradation(curve, 1.0) == pytest.approx(0.75)


def test_delta_table_arithmetic():
    a = ev.DegradationCurve("swap", [(0.0, 30.0), (1.0, 25.0)], "a")
    b = ev.DegradationCurve("swap", [(0.0, 20.0), (1.0, 10.0)], "b")
    assert ev.delta_table(a, b) == [(0.0, 10.0), (1.0, 15.0)]
    c = ev.DegradationCurve("swap", [(0.0, 20.0), (0.5, 10.0)], "c")
    with pytest.raises(ValueError):
        ev.delta_table(a, c)


def test_sweep_scores_clean_once_and_is_reproducible():
    src = [f"token{i} alpha beta gamma" for i in range(30)]
    calls = []

    def translate(lines):
        calls.append(list(lines))
        return list(lines)

    curve = ev.degradation_sweep(translate, src, src, "swap", seeds=(0, 1),
                                 ps=(0.0, 0.5, 1.0), model_id="echo")
    assert curve.bleu_at(0.0) == pytest.approx(100.0, abs=1e-9)
    # p=0 translates once; the two noised points translate per seed.
    assert len(calls) == 1 + 2 * 2
    assert curve.points[1][1] < 100.0
    again = ev.degradation_sweep(translate, src, src, "swap", seeds=(0, 1),
                                 ps=(0.0, 0.5, 1.0), model_id="echo")
    assert again.points == curve.points
    assert again.rows == curve.rows


def test_sweep_flat_when_noise_cannot_apply():
    # A mapchars table whose sources never occur leaves input untouched, so
    # an identity model's curve is flat at the clean score.
    src = ["alpha beta gamma delta epsilon", "zeta eta theta iota kappa"]
    table = {"Q": "Z"}
    curve = ev.degradation_sweep(lambda x: list(x), src, src, "mapchars",
                                 seeds=(0,), table=table, ps=(0.0, 0.5, 1.0))
    assert [b for _, b in curve.points] == pytest.approx([100.0, 100.0, 100.0])


def test_sweep_matches_manual_injection():
    src = ["one two three four", "five six seven eight"]
    ref = ["one two three four", "five six seven eight"]
    seed = 4
    p = 0.5
    curve = ev.degradation_sweep(lambda x: list(x), src, ref, "swap",
                                 seeds=(seed,), ps=(0.0, p))
    spec = NoiseSpec(kind="swap", p=p, seed=ev.noise_stream_seed(seed, p))
    noised, _ = inject_corpus(src, spec)
    expect = ev.corpus_bleu(noised, ref).bleu
    assert curve.bleu_at(p) == pytest.approx(expect, abs=1e-12)


def test_noise_stream_seed_distinguishes_points():
    seeds = {ev.noise_stream_seed(0, p) for p in (0.1, 0.2, 0.5, 1.0)}
    assert len(seeds) == 4
    assert ev.noise_stream_seed(0, 0.5) == ev.noise_stream_seed(0, 0.5)
    assert ev.noise_stream_seed(0, 0.5) != ev.noise_stream_seed(1, 0.5)


def test_curve_csv_format(tmp_path):
    curve = ev.DegradationCurve(
        "swap", [(0.0, 50.0), (1.0, 25.0)], "visual",
        rows=[(0.0, 50.0, "visual", "swap", 0), (1.0, 25.0, "visual", "swap", 0)])
    path = tmp_path / "curve.csv"
    ev.write_curve_csv(curve, path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "p,bleu,model,kind,seed"
    assert lines[1] == "0.0,50.000000,visual,swap,0"
    assert len(lines) == 3


def test_delta_csv_format(tmp_path):
    path = tmp_path / "delta.csv"
    ev.write_delta_csv([(0.0, 0.0), (1.0, 12.5)], path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines == ["p,delta", "0.0,0.000000", "1.0,12.500000"]


def test_curve_svg_contains_polylines(tmp_path):
    a = ev.DegradationCurve("swap", [(0.0, 90.0), (1.0, 70.0)], "visual")
    b = ev.DegradationCurve("swap", [(0.0, 95.0), (1.0, 20.0)], "bpe")
    path = tmp_path / "curve.svg"
    ev.write_curve_svg([a, b], path)
    text = path.read_text(encoding="utf-8")
    assert text.startswith("<svg")
    assert text.count("<polyline") == 2
    assert "visual" in text and "bpe" in text
