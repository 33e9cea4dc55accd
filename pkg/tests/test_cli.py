import io
import json
import os

import pytest

from pixelmt import cli


def run_cli(monkeypatch, capsys, argv, stdin=""):
    monkeypatch.setattr("sys.stdin", io.StringIO(stdin))
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def tiny_config(run_dir, **overrides):
    doc = {
        "run_dir": str(run_dir),
        "seed": 0,
        "task": {"kind": "copy", "train_size": 40, "dev_size": 10, "test_size": 10},
        "model": {"d_model": 16, "heads": 2, "layers": 1, "d_ff": 32,
                  "max_len": 48, "window": 16, "stride": 8},
        "segmentation": {"src_mode": "char", "tgt_mode": "word"},
        "train": {"max_steps": 6, "batch_tokens": 200, "eval_every": 5},
        "noise": [{"kind": "swap", "ps": [0.0, 1.0], "seeds": [0]}],
    }
    doc.update(overrides)
    return doc


def write_config(tmp_path, doc, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc), encoding="utf-8")
    return str(path)


def test_render_command(tmp_path, monkeypatch, capsys):
    out_dir = tmp_path / "imgs"
    code, out, _ = run_cli(monkeypatch, capsys,
                           ["render", "--out-dir", str(out_dir)],
                           stdin="hello world\nsecond line\n")
    assert code == 0
    lines = out.splitlines()
    assert len(lines) == 2
    for i, line in enumerate(lines):
        path, height, width = line.split("\t")
        assert os.path.exists(path)
        assert path.endswith(f"line_{i:04d}.pgm")
        assert int(height) > 0 and int(width) > 0


def test_slice_command(monkeypatch, capsys):
    code, out, _ = run_cli(monkeypatch, capsys,
                           ["slice", "--window", "20", "--stride", "10"],
                           stdin="a longer line of text\nhi\n")
    assert code == 0
    rows = [line.split("\t") for line in out.splitlines()]
    assert len(rows) == 2
    assert int(rows[0][1]) > int(rows[1][1])  # longer text, more slices
    assert rows[0][2].endswith("x20")


def test_slice_rejects_bad_geometry(monkeypatch, capsys):
    code, _, err = run_cli(monkeypatch, capsys,
                           ["slice", "--window", "5", "--stride", "10"],
                           stdin="text\n")
    assert code == 1
    assert "window" in err


def test_noise_command(monkeypatch, capsys):
    code, out, err = run_cli(monkeypatch, capsys,
                             ["noise", "--kind", "swap", "--p", "1.0", "--seed", "3"],
                             stdin="alpha beta gamma\ndelta epsilon\n")
    assert code == 0
    noised = out.splitlines()
    assert len(noised) == 2
    assert noised[0] != "alpha beta gamma"
    report = json.loads(err.splitlines()[-1])
    assert report["tokens_total"] == 5
    assert report["tokens_noised"] == report["tokens_eligible"] == 5


def test_noise_command_builtin_table(monkeypatch, capsys):
    code, out, _ = run_cli(monkeypatch, capsys,
                           ["noise", "--kind", "mapchars", "--p", "1.0"],
                           stdin="Яблоко\n")
    assert code == 0
    assert out.splitlines()[0].startswith("R")


def test_bpe_train_and_apply(tmp_path, monkeypatch, capsys):
    model_path = tmp_path / "model.bpe"
    corpus = "low lower lowest\nnew newer newest\n"
    code, _, err = run_cli(monkeypatch, capsys,
                           ["bpe", "train", "--merges", "20", "--out", str(model_path)],
                           stdin=corpus)
    assert code == 0
    assert model_path.exists()
    assert "merges" in err
    code, out, _ = run_cli(monkeypatch, capsys,
                           ["bpe", "apply", "--model", str(model_path)],
                           stdin="low newest\n")
    assert code == 0
    symbols = out.splitlines()[0].split(" ")
    assert "".join(symbols).replace("</w>", " ").strip() == "low newest"
    # Dropout at 1.0 degenerates to characters + sentinels.
    code, out, _ = run_cli(monkeypatch, capsys,
                           ["bpe", "apply", "--model", str(model_path),
                            "--dropout", "1.0"],
                           stdin="low\n")
    assert out.splitlines()[0].split(" ") == ["l", "o", "w", "</w>"]


def test_gen_corpus_command(tmp_path, monkeypatch, capsys):
    out_dir = tmp_path / "corpus"
    code, _, err = run_cli(monkeypatch, capsys,
                           ["gen-corpus", "--task", "mapped-lexicon", "--size", "30",
                            "--dev-size", "8", "--test-size", "8",
                            "--seed", "2", "--out-dir", str(out_dir)])
    assert code == 0
    for name, count in (("train", 30), ("dev", 8), ("test", 8)):
        src = (out_dir / f"{name}.src").read_text(encoding="utf-8").splitlines()
        tgt = (out_dir / f"{name}.tgt").read_text(encoding="utf-8").splitlines()
        assert len(src) == count and len(tgt) == count
    assert "train: 30 pairs" in err


def test_pixel_stats_command(monkeypatch, capsys):
    code, out, _ = run_cli(monkeypatch, capsys, ["pixel-stats"],
                           stdin="some text to measure\n")
    assert code == 0
    stats = json.loads(out)
    assert 0.0 < stats["avg_density"] < 1.0
    assert 0.0 < stats["nonwhite_fraction"] < 1.0


def test_train_translate_evaluate_cycle(tmp_path, monkeypatch, capsys):
    run_dir = tmp_path / "run"
    cfg_path = write_config(tmp_path, tiny_config(run_dir))
    code, out, _ = run_cli(monkeypatch, capsys, ["train", "--config", cfg_path])
    assert code == 0
    assert out.strip() == str(run_dir)
    for name in ("config.json", "metrics.jsonl", "curve_swap.csv", "curve_swap.svg"):
        assert (run_dir / name).exists(), name
    assert (run_dir / "checkpoint" / "pipeline.json").exists()
    assert (run_dir / "corpus" / "train.src").exists()
    metrics = [json.loads(l) for l in (run_dir / "metrics.jsonl").open()]
    assert sum("loss" in m for m in metrics) == 6
    assert any("dev_bleu" in m for m in metrics)
    csv_lines = (run_dir / "curve_swap.csv").read_text(encoding="utf-8").splitlines()
    assert csv_lines[0] == "p,bleu,model,kind,seed"
    assert len(csv_lines) == 3  # one row per (p, seed)

    code, out, _ = run_cli(monkeypatch, capsys,
                           ["translate", "--checkpoint", str(run_dir / "checkpoint")],
                           stdin="a b c\nd e f g\n")
    assert code == 0
    assert len(out.splitlines()) == 2

    code, out, _ = run_cli(monkeypatch, capsys,
                           ["evaluate", "--checkpoint", str(run_dir / "checkpoint"),
                            "--src", str(run_dir / "corpus" / "test.src"),
                            "--ref", str(run_dir / "corpus" / "test.tgt")])
    assert code == 0
    score = json.loads(out)
    assert set(score) == {"bleu", "precisions", "brevity_penalty", "hyp_len", "ref_len"}
    assert 0.0 <= score["bleu"] <= 100.0


def test_train_refuses_existing_run_dir(tmp_path, monkeypatch, capsys):
    run_dir = tmp_path / "run"
    cfg_path = write_config(tmp_path, tiny_config(run_dir))
    assert run_cli(monkeypatch, capsys, ["train", "--config", cfg_path])[0] == 0
    code, _, err = run_cli(monkeypatch, capsys, ["train", "--config", cfg_path])
    assert code == 1
    assert "[setup]" in err


def test_train_rejects_bad_geometry_before_any_work(tmp_path, monkeypatch, capsys):
    run_dir = tmp_path / "never_created"
    doc = tiny_config(run_dir, segmentation={"src_mode": "visual", "tgt_mode": "word"})
    doc["model"]["window"] = 8
    doc["model"]["stride"] = 16
    cfg_path = write_config(tmp_path, doc)
    code, _, err = run_cli(monkeypatch, capsys, ["train", "--config", cfg_path])
    assert code == 1
    assert "[config]" in err
    assert not run_dir.exists()


def test_sweep_command_filters_invalid_geometry(tmp_path, monkeypatch, capsys):
    base = tiny_config(tmp_path / "ignored",
                       segmentation={"src_mode": "visual", "tgt_mode": "word"},
                       noise=[])
    base["task"]["train_size"] = 20
    base["train"]["max_steps"] = 2
    cfg_path = write_config(tmp_path, base)
    out_dir = tmp_path / "sweeps"
    axes = json.dumps({"window": [12], "stride": [6, 24]})
    code, out, _ = run_cli(monkeypatch, capsys,
                           ["sweep", "--config", cfg_path,
                            "--axes", axes, "--out-dir", str(out_dir)])
    assert code == 0
    csv_path = out.strip()
    lines = open(csv_path, encoding="utf-8").read().splitlines()
    assert lines[0] == "window,stride,dev_bleu"
    assert len(lines) == 2  # stride 24 > window 12 never runs
    assert lines[1].startswith("12,6,")
    assert lines[1].split(",")[2] != ""


def test_cli_reports_errors_with_exit_code(monkeypatch, capsys):
    code, _, err = run_cli(monkeypatch, capsys,
                           ["bpe", "apply", "--model", "/nonexistent.bpe"],
                           stdin="x\n")
    assert code == 1
    assert err.strip()
