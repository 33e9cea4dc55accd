"""Run configuration: one JSON document covering corpus, model, segmentation,
training, and noise sweeps, validated against a schema before any work runs.

A run either generates a synthetic task corpus ("task") or points at existing
parallel files ("corpus"); exactly one of the two must be present. The
``segmentation.src_mode`` field selects the model front-end: "visual" renders
source text, anything else feeds token ids.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import jsonschema

from .corpus import TASKS
from .model import ModelConfig, TrainConfig
from .noise import KINDS as NOISE_KINDS

SRC_MODES = ("visual", "bpe", "char", "word", "ngram")
TGT_MODES = ("word", "char", "bpe")

_NOISE_ITEM = {
    "type": "object",
    "properties": {
        "kind": {"enum": list(NOISE_KINDS)},
        "ps": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1},
               "minItems": 1},
        "seeds": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
        "table": {"type": ["string", "null"]},
        "char_p": {"type": "number", "minimum": 0, "maximum": 1},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

SCHEMA = {
    "type": "object",
    "properties": {
        "run_dir": {"type": "string", "minLength": 1},
        "seed": {"type": "integer"},
        "task": {
            "type": "object",
            "properties": {
                "kind": {"enum": list(TASKS)},
                "train_size": {"type": "integer", "minimum": 1},
                "dev_size": {"type": "integer", "minimum": 1},
                "test_size": {"type": "integer", "minimum": 1},
            },
            "required": ["kind", "train_size"],
            "additionalProperties": False,
        },
        "corpus": {
            "type": "object",
            "properties": {k: {"type": "string"} for k in
                           ("train_src", "train_tgt", "dev_src", "dev_tgt",
                            "test_src", "test_tgt")},
            "required": ["train_src", "train_tgt", "dev_src", "dev_tgt"],
            "additionalProperties": False,
        },
        "model": {
            "type": "object",
            "properties": {
                "layers": {"type": "integer", "minimum": 1},
                "heads": {"type": "integer", "minimum": 1},
                "d_model": {"type": "integer", "minimum": 1},
                "d_ff": {"type": "integer", "minimum": 1},
                "label_smoothing": {"type": "number", "minimum": 0,
                                    "exclusiveMaximum": 1},
                "max_len": {"type": "integer", "minimum": 2},
                "conv_blocks": {"type": "integer", "minimum": 0},
                "kernel": {"type": "integer", "minimum": 1},
                "channels": {"type": "integer", "minimum": 1},
                "font_size": {"type": "integer", "minimum": 6},
                "font_path": {"type": ["string", "null"]},
                "window": {"type": "integer", "minimum": 1},
                "stride": {"type": "integer", "minimum": 1},
                "dtype": {"enum": ["float32", "float64"]},
            },
            "additionalProperties": False,
        },
        "segmentation": {
            "type": "object",
            "properties": {
                "src_mode": {"enum": list(SRC_MODES)},
                "src_merges": {"type": "integer", "minimum": 0},
                "tgt_mode": {"enum": list(TGT_MODES)},
                "tgt_merges": {"type": "integer", "minimum": 0},
                "ngram_n": {"type": "integer", "minimum": 1},
                "ngram_stride": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "train": {
            "type": "object",
            "properties": {
                "batch_tokens": {"type": "integer", "minimum": 1},
                "lr": {"type": "number", "exclusiveMinimum": 0},
                "max_steps": {"type": "integer", "minimum": 1},
                "eval_every": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer"},
            },
            "additionalProperties": False,
        },
        "noise": {"type": "array", "items": _NOISE_ITEM},
    },
    "required": ["run_dir", "seed"],
    "additionalProperties": False,
}

DEFAULT_PS = [round(0.1 * i, 1) for i in range(11)]
DEFAULT_NOISE_SEEDS = [0, 1, 2]


@dataclass(frozen=True)
class TaskSpec:
    kind: str
    train_size: int
    dev_size: int = 200
    test_size: int = 200


@dataclass(frozen=True)
class CorpusPaths:
    train_src: str
    train_tgt: str
    dev_src: str
    dev_tgt: str
    test_src: Optional[str] = None
    test_tgt: Optional[str] = None


@dataclass(frozen=True)
class SegmentationSpec:
    src_mode: str = "visual"
    src_merges: int = 200
    tgt_mode: str = "word"
    tgt_merges: int = 200
    ngram_n: int = 3
    ngram_stride: int = 1

    def __post_init__(self):
        if self.src_mode not in SRC_MODES:
            raise ValueError(f"unknown src_mode {self.src_mode!r}")
        if self.tgt_mode not in TGT_MODES:
            raise ValueError(f"unknown tgt_mode {self.tgt_mode!r}")
        if not 1 <= self.ngram_stride <= self.ngram_n:
            raise ValueError("ngram stride must satisfy 1 <= stride <= n")


@dataclass(frozen=True)
class NoiseSweepSpec:
    kind: str
    ps: Tuple[float, ...] = tuple(DEFAULT_PS)
    seeds: Tuple[int, ...] = tuple(DEFAULT_NOISE_SEEDS)
    table: Optional[str] = None  # path, or the name of a bundled table
    char_p: float = 1.0


@dataclass(frozen=True)
class RunConfig:
    run_dir: str
    seed: int
    task: Optional[TaskSpec] = None
    corpus: Optional[CorpusPaths] = None
    model: Dict[str, object] = field(default_factory=dict)
    segmentation: SegmentationSpec = field(default_factory=SegmentationSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    noise: Tuple[NoiseSweepSpec, ...] = ()

    def model_config(self, target_vocab: int, source_vocab: int = 0) -> ModelConfig:
        """Concrete ModelConfig once the vocabulary sizes are known."""
        frontend = "visual" if self.segmentation.src_mode == "visual" else "token"
        return ModelConfig(target_vocab=target_vocab, source_vocab=source_vocab,
                           frontend=frontend, seed=self.seed, **self.model)


def parse_run_config(doc: dict) -> RunConfig:
    """Validate a raw JSON document and build the typed RunConfig.

    Cross-field rules checked here, before any work: exactly one of
    task/corpus, and window >= stride for the visual front-end.
    """
    jsonschema.validate(doc, SCHEMA)
    has_task = "task" in doc
    has_corpus = "corpus" in doc
    if has_task == has_corpus:
        raise ValueError("config must contain exactly one of 'task' or 'corpus'")

    model = dict(doc.get("model", {}))
    window = model.get("window", ModelConfig.__dataclass_fields__["window"].default)
    stride = model.get("stride", ModelConfig.__dataclass_fields__["stride"].default)
    seg = SegmentationSpec(**doc.get("segmentation", {}))
    if seg.src_mode == "visual" and window < stride:
        raise ValueError(f"window ({window}) must be >= stride ({stride})")

    noise = []
    for item in doc.get("noise", []):
        item = dict(item)
        if "ps" in item:
            item["ps"] = tuple(item["ps"])
        if "seeds" in item:
            item["seeds"] = tuple(item["seeds"])
        noise.append(NoiseSweepSpec(**item))

    return RunConfig(
        run_dir=doc["run_dir"],
        seed=doc["seed"],
        task=TaskSpec(**doc["task"]) if has_task else None,
        corpus=CorpusPaths(**doc["corpus"]) if has_corpus else None,
        model=model,
        segmentation=seg,
        train=TrainConfig(**doc.get("train", {})),
        noise=tuple(noise),
    )


def load_run_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as f:
        return parse_run_config(json.load(f))


def serialize_run_config(cfg: RunConfig) -> str:
    """Canonical JSON for a RunConfig; parse(serialize(cfg)) == cfg."""
    doc: Dict[str, object] = {"run_dir": cfg.run_dir, "seed": cfg.seed}
    if cfg.task is not None:
        doc["task"] = asdict(cfg.task)
    if cfg.corpus is not None:
        doc["corpus"] = {k: v for k, v in asdict(cfg.corpus).items() if v is not None}
    if cfg.model:
        doc["model"] = dict(cfg.model)
    doc["segmentation"] = asdict(cfg.segmentation)
    doc["train"] = asdict(cfg.train)
    if cfg.noise:
        doc["noise"] = [
            {"kind": n.kind, "ps": list(n.ps), "seeds": list(n.seeds),
             "table": n.table, "char_p": n.char_p}
            for n in cfg.noise
        ]
    return json.dumps(doc, sort_keys=True, indent=2)
