"""pixelmt: pixel-rendered source text for small sequence-to-sequence
translation models, with subword baselines and a noise-robustness harness.

The pieces compose left to right: render text to a grayscale line image,
slice it into overlapping windows, embed slices through a small conv stack,
and feed them to an encoder-decoder model — or swap the whole visual
front-end for token embeddings over BPE/char/word segmentations. The
evaluation side injects seeded token-level noise and traces BLEU degradation
curves over the noise probability.
"""

from .render import LineImage, PixelStats, RenderConfig, pixel_stats, render_line
from .slicer import SliceConfig, slice_count, slice_image, slice_pixels
from .noise import NoiseReport, NoiseSpec, inject, inject_corpus
from .segmentation import (BpeModel, TokenSequence, Vocab, bpe_apply,
                           bpe_dropout_apply, bpe_train, char_ngrams,
                           detokenize, segment)
from .embedder import EmbedderConfig, VisualEmbedder
from .model import (ModelConfig, Seq2SeqModel, SourceBatch, TrainConfig,
                    load_checkpoint, save_checkpoint)
from .evaluation import (BleuScore, DegradationCurve, corpus_bleu,
                         degradation_sweep, delta_table)
from .corpus import gen_synthetic_corpus
from .config import RunConfig, load_run_config, parse_run_config
from .runner import Pipeline, SweepGrid, run, sweep, train_pipeline

__version__ = "0.1.0"
