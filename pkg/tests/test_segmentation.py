import numpy as np
import pytest

from pixelmt import noise, segmentation as seg


def replay_in_order(word, model):
    """Reference BPE application: replay merges in learned order."""
    symbols = list(word) + [seg.EOW]
    for left, right in model.merges:
        out = []
        i = 0
        while i < len(symbols):
            if i + 1 < len(symbols) and symbols[i] == left and symbols[i + 1] == right:
                out.append(left + right)
                i += 2
            else:
                out.append(symbols[i])
                i += 1
        symbols = out
    return tuple(symbols)


def test_first_merge_on_micro_corpus():
    model = seg.bpe_train(["ab", "ab", "ac"], merge_count=1)
    assert model.merges == [("a", "b")]


def test_hand_traced_merge_order():
    # ab x2, ac x1:
    #   (a,b)=2 ties (b,</w>)=2 -> lexicographic min is (a,b)
    #   then (ab,</w>)=2 beats the count-1 pairs
    #   then (a,c)=1 ties (c,</w>)=1 -> (a,c)
    model = seg.bpe_train(["ab", "ab", "ac"], merge_count=3)
    assert model.merges == [("a", "b"), ("ab", seg.EOW), ("a", "c")]


def test_zero_merges_is_character_model():
    model = seg.bpe_train(["hello", "world"], merge_count=0)
    assert model.merges == []
    assert seg.bpe_word_symbols("held", model) == ("h", "e", "l", "d", seg.EOW)


def test_training_is_deterministic():
    corpus = ["the cat sat", "the mat", "a cat"] * 3
    a = seg.bpe_train(corpus, merge_count=20)
    b = seg.bpe_train(corpus, merge_count=20)
    assert a.merges == b.merges


def test_apply_single_learned_merge():
    model = seg.BpeModel(merges=[("a", "b")], base_chars=set("abc"))
    assert seg.bpe_word_symbols("abc", model) == ("ab", "c", seg.EOW)


def test_fully_merged_word_is_single_symbol():
    model = seg.bpe_train(["ab", "ab", "ab"], merge_count=2)
    assert model.merges == [("a", "b"), ("ab", seg.EOW)]
    assert seg.bpe_word_symbols("ab", model) == ("ab" + seg.EOW,)


def test_min_rank_equals_replay_in_order():
    rng = np.random.default_rng(4)
    letters = np.array(list("abcdef"))
    corpus = [
        " ".join(
            "".join(rng.choice(letters, size=int(rng.integers(1, 9))))
            for _ in range(int(rng.integers(1, 6)))
        )
        for _ in range(120)
    ]
    model = seg.bpe_train(corpus, merge_count=60)
    for _ in range(300):
        word = "".join(rng.choice(letters, size=int(rng.integers(1, 12))))
        assert seg.bpe_word_symbols(word, model) == replay_in_order(word, model)


def test_token_count_monotone_in_merge_count():
    corpus = ["free the trees", "three trees", "feed the bees"] * 4
    test_lines = ["feed three trees", "free bees"]
    prev = None
    for merges in (0, 2, 5, 10, 20, 40):
        model = seg.bpe_train(corpus, merge_count=merges)
        total = sum(len(seg.bpe_apply(line, model)) for line in test_lines)
        if prev is not None:
            assert total <= prev
        prev = total


def test_bpe_apply_round_trip():
    corpus = ["pack my box", "with five dozen", "liquor jugs"] * 2
    model = seg.bpe_train(corpus, merge_count=30)
    for text in ["pack five jugs", "box with liquor", "dozen jugs pack my box"]:
        out = seg.bpe_apply(text, model)
        assert seg.detokenize(out.surface, "bpe") == text


def test_ids_match_surface():
    model = seg.bpe_train(["ids and symbols agree"], merge_count=10)
    out = seg.bpe_apply("symbols and ids", model, add_specials=True)
    vocab = model.vocab()
    assert out.ids == [vocab.id(s) for s in out.surface]
    assert out.surface[0] == seg.BOS and out.surface[-1] == seg.EOS


def test_unseen_chars_still_segment():
    model = seg.bpe_train(["aaa bbb"], merge_count=4)
    out = seg.bpe_apply("zq", model)
    assert tuple(out.surface) == ("z", "q", seg.EOW)
    assert out.ids[0] == seg.UNK_ID  # not in the model's inventory


def test_dropout_limits():
    corpus = ["round and round the ragged rock"] * 3
    model = seg.bpe_train(corpus, merge_count=25)
    rng = np.random.default_rng(0)
    for word in ["round", "ragged", "rock"]:
        assert seg.bpe_dropout_word_symbols(word, model, 0.0, rng) == seg.bpe_word_symbols(word, model)
        assert seg.bpe_dropout_word_symbols(word, model, 1.0, rng) == tuple(word) + (seg.EOW,)


def test_dropout_token_count_non_decreasing_in_p():
    corpus = ["the quick brown fox jumps over the lazy dog"] * 5
    model = seg.bpe_train(corpus, merge_count=40)
    text = "the quick brown dog jumps over the lazy fox"
    means = []
    for drop_p in (0.0, 0.25, 0.5, 0.75, 1.0):
        counts = []
        for s in range(3):
            rng = np.random.default_rng(s)
            for _ in range(40):
                counts.append(len(seg.bpe_dropout_apply(text, model, drop_p, rng)))
        means.append(float(np.mean(counts)))
    assert all(b >= a - 1e-9 for a, b in zip(means, means[1:]))
    assert means[-1] > means[0]


def test_dropout_pieces_are_splits_of_the_word():
    corpus = ["banana bandana cabana"] * 4
    model = seg.bpe_train(corpus, merge_count=20)
    rng = np.random.default_rng(9)
    for _ in range(100):
        out = seg.bpe_dropout_word_symbols("bandana", model, 0.4, rng)
        assert "".join(out) == "bandana" + seg.EOW


def test_dropout_validation():
    model = seg.bpe_train(["ab"], merge_count=1)
    with pytest.raises(ValueError):
        seg.bpe_dropout_apply("ab", model, 1.5, np.random.default_rng(0))


def test_model_file_round_trip(tmp_path):
    corpus = ["save and load", "load and save"] * 2
    model = seg.bpe_train(corpus, merge_count=15)
    path = tmp_path / "model.bpe"
    model.save(path)
    back = seg.BpeModel.load(path)
    assert back.merges == model.merges
    for word in ["save", "load", "and", "novel"]:
        assert seg.bpe_word_symbols(word, back) == seg.bpe_word_symbols(word, model)
    first = path.read_text(encoding="utf-8")
    back.save(path)
    assert path.read_text(encoding="utf-8") == first


def test_model_file_validation(tmp_path):
    bad_header = tmp_path / "a.bpe"
    bad_header.write_text("not-a-model 3\n", encoding="utf-8")
    with pytest.raises(ValueError):
        seg.BpeModel.load(bad_header)
    bad_count = tmp_path / "b.bpe"
    bad_count.write_text("bpe-v1 2\na\tb\n", encoding="utf-8")
    with pytest.raises(ValueError):
        seg.BpeModel.load(bad_count)


def test_train_input_validation():
    with pytest.raises(ValueError):
        seg.bpe_train([], merge_count=5)
    with pytest.raises(ValueError):
        seg.bpe_train(["ok"], merge_count=-1)


def test_merges_stop_when_exhausted():
    model = seg.bpe_train(["ab"], merge_count=100)
    assert len(model.merges) == 2  # (a,b) then (ab,</w>) and nothing left


def test_char_ngram_examples():
    assert seg.char_ngram_symbols("abcd", 3, 1) == ["abc", "bcd"]
    assert seg.char_ngram_symbols("ab", 3, 1) == ["ab" + seg.NGRAM_PAD]
    assert seg.char_ngram_symbols("abcde", 2, 2) == ["ab", "cd", "e" + seg.NGRAM_PAD]
    assert seg.char_ngram_symbols("abc", 1, 1) == ["a", "b", "c"]


def test_char_ngram_count_formula():
    rng = np.random.default_rng(2)
    for _ in range(500):
        n = int(rng.integers(1, 6))
        stride = int(rng.integers(1, n + 1))
        length = int(rng.integers(1, 30))
        word = "x" * length
        got = seg.char_ngram_symbols(word, n, stride)
        if length <= n:
            expect = 1
        else:
            expect = int(np.ceil((length - n) / stride)) + 1
        assert len(got) == expect
        assert all(len(g) == n for g in got)
        padded = word + seg.NGRAM_PAD * (n + (expect - 1) * stride - length)
        assert all(g == padded[i * stride : i * stride + n] for i, g in enumerate(got))


def test_char_ngram_validation():
    with pytest.raises(ValueError):
        seg.char_ngram_symbols("abc", 0, 1)
    with pytest.raises(ValueError):
        seg.char_ngram_symbols("abc", 2, 3)  # stride must not exceed n


def test_segment_modes():
    assert tuple(seg.segment("a bb", "char", add_specials=False).surface) == ("a", " ", "b", "b")
    assert tuple(seg.segment("a bb", "word", add_specials=False).surface) == ("a", "bb")
    got = seg.segment("ab", "ngram", add_specials=False, n=3, stride=1)
    assert tuple(got.surface) == ("ab" + seg.NGRAM_PAD,)
    with pytest.raises(ValueError):
        seg.segment("a", "subword")
    with pytest.raises(ValueError):
        seg.segment("a", "bpe")  # model required


def test_segment_adds_sentence_brackets():
    got = seg.segment("hi", "word")
    assert got.surface[0] == seg.BOS and got.surface[-1] == seg.EOS
    assert got.surface[1:-1] == ["hi"]
    assert got.ids[0] == seg.BOS_ID and got.ids[-1] == seg.EOS_ID


def test_segment_bpe_delegates():
    model = seg.bpe_train(["some words here"], merge_count=8)
    direct = seg.bpe_apply("some here", model)
    via = seg.segment("some here", "bpe", model=model, add_specials=False)
    assert via.surface == direct.surface and via.ids == direct.ids


def test_detokenize_modes():
    assert seg.detokenize(["a", "b", "b"], "char") == "abb"
    assert seg.detokenize(["a", "bb"], "word") == "a bb"
    assert seg.detokenize([seg.BOS, "hi", seg.EOS, seg.PAD], "word") == "hi"
    with pytest.raises(ValueError):
        seg.detokenize(["a"], "ngram")


def test_vocab_basics(tmp_path):
    vocab = seg.Vocab.from_content_symbols(["b", "a", "c", "a"])
    assert tuple(vocab.symbols[:4]) == seg.SPECIALS
    assert vocab.symbols[4:] == ["a", "b", "c"]
    assert vocab.id("a") == 4
    assert vocab.id("zzz") == seg.UNK_ID
    assert vocab.ids(["a", "zzz", "c"]) == [4, seg.UNK_ID, 6]
    assert vocab.symbol(seg.PAD_ID) == seg.PAD
    path = tmp_path / "vocab.txt"
    vocab.save(path)
    back = seg.Vocab.load(path)
    assert back.symbols == vocab.symbols


def test_special_ids_are_pinned():
    assert (seg.PAD_ID, seg.UNK_ID, seg.BOS_ID, seg.EOS_ID) == (0, 1, 2, 3)
    vocab = seg.Vocab.from_content_symbols([])
    assert [vocab.id(s) for s in (seg.PAD, seg.UNK, seg.BOS, seg.EOS)] == [0, 1, 2, 3]
    with pytest.raises(ValueError):
        seg.Vocab(["<pad>", "<unk>", "a", "b"])


def test_corpus_vocab_covers_training_segmentations():
    corpus = ["cover all pieces", "all pieces covered"]
    model = seg.bpe_train(corpus, merge_count=10)
    vocab = seg.corpus_vocab(corpus, "bpe", model=model)
    for line in corpus:
        for symbol in seg.bpe_apply(line, model).surface:
            assert vocab.id(symbol) != seg.UNK_ID


def test_noised_words_fragment_more():
    # Character transpositions push words off the learned merges, so they
    # split into more pieces than their clean forms.
    rng = np.random.default_rng(13)
    letters = np.array(list("abcdefghijkl"))
    words = ["".join(rng.choice(letters, size=int(rng.integers(4, 9)))) for _ in range(150)]
    corpus = [" ".join(words[i : i + 5]) for i in range(0, 150, 5)]
    model = seg.bpe_train(corpus, merge_count=120)
    clean = sum(len(seg.bpe_word_symbols(w, model)) for w in words)
    swap_rng = np.random.default_rng(0)
    noised = sum(len(seg.bpe_word_symbols(noise.swap_word(w, swap_rng), model)) for w in words)
    assert noised > clean
