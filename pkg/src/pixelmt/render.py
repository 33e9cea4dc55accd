"""Deterministic rasterization of sentences into fixed-height grayscale line images.

A line image uses the convention 0.0 = background (white page), 1.0 = full ink.
Glyphs are placed strictly left to right by their horizontal advance, one
codepoint at a time: no kerning, no ligatures, no bidirectional layout. The
rasterizer's grayscale anti-aliasing is kept (values may fall anywhere in
[0, 1]); nothing is binarized. Codepoints the font cannot map render as the
font's replacement glyph.

Rendering is pure given a font handle, so images are bit-identical across
repeated calls and safe to produce from multiple threads.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from PIL import Image, ImageDraw, ImageFont

BACKGROUND = 0.0
INK = 1.0

MIN_FONT_SIZE = 6
DEFAULT_FONT_SIZE = 10

# Left margin inside a glyph tile, absorbing negative side bearings; the same
# slack is kept on the right for overhang past the advance width.
_TILE_MARGIN = 8


def builtin_font_path() -> str:
    """Path of the sans-serif face bundled with the package."""
    ref = importlib.resources.files("pixelmt").joinpath("data/fonts/DejaVuSans.ttf")
    return str(ref)


@dataclass(frozen=True)
class RenderConfig:
    """Rendering parameters.

    ``font_path=None`` selects the bundled face. ``min_width`` is a floor on
    the produced image width so that degenerate inputs (empty or
    whitespace-only text) still yield a usable all-background image; pipelines
    typically set it to the slicing window length.
    """

    font_path: Optional[str] = None
    font_size: int = DEFAULT_FONT_SIZE
    inter_char_padding: int = 0
    min_width: int = 1

    def __post_init__(self):
        if self.font_size < MIN_FONT_SIZE:
            raise ValueError(
                f"font size below minimum: {self.font_size} < {MIN_FONT_SIZE}"
            )
        if self.inter_char_padding < 0:
            raise ValueError("inter_char_padding must be >= 0")
        if self.min_width < 1:
            raise ValueError("min_width must be >= 1")

    def resolved_font_path(self) -> str:
        return self.font_path if self.font_path is not None else builtin_font_path()


@dataclass(frozen=True)
class LineImage:
    """Grayscale raster of one rendered sentence.

    ``pixels`` is a dense (height, width) float32 array with values in [0, 1].
    """

    height: int
    width: int
    pixels: np.ndarray
    source_text: str

    def __post_init__(self):
        if self.pixels.shape != (self.height, self.width):
            raise ValueError("pixel buffer shape does not match height/width")


@dataclass(frozen=True)
class PixelStats:
    avg_density: float
    nonwhite_fraction: float


@dataclass
class _Glyph:
    bitmap: np.ndarray  # (h, tile_width) float32 in [0, 1]
    advance: float
    ink_right: int  # rightmost non-background column in the tile, -1 if blank


@dataclass
class FontHandle:
    """A loaded font face at a fixed size, with its per-codepoint raster cache.

    The handle is read-only after construction apart from the internal glyph
    cache, which is only ever extended with deterministic entries; sharing a
    handle across threads is safe.
    """

    path: str
    size: int
    line_height: int
    _font: ImageFont.FreeTypeFont
    _glyphs: Dict[str, _Glyph] = field(default_factory=dict)

    def glyph(self, ch: str) -> _Glyph:
        g = self._glyphs.get(ch)
        if g is None:
            g = self._rasterize(ch)
            self._glyphs[ch] = g
        return g

    def _rasterize(self, ch: str) -> _Glyph:
        advance = float(self._font.getlength(ch))
        tile_w = int(np.ceil(max(advance, 0.0))) + 2 * _TILE_MARGIN
        img = Image.new("L", (tile_w, self.line_height), 0)
        ImageDraw.Draw(img).text((_TILE_MARGIN, 0), ch, font=self._font, fill=255)
        bitmap = np.asarray(img, dtype=np.float32) / 255.0
        ink_cols = np.nonzero(bitmap.any(axis=0))[0]
        ink_right = int(ink_cols[-1]) if ink_cols.size else -1
        return _Glyph(bitmap=bitmap, advance=advance, ink_right=ink_right)


def load_font(path: str, size: int) -> FontHandle:
    """Load a scalable font file at ``size`` points.

    The handle's ``line_height`` is ascent + descent for the face at that
    size; it is the height of every image rendered with the handle.
    """
    if size < MIN_FONT_SIZE:
        raise ValueError(f"font size below minimum: {size} < {MIN_FONT_SIZE}")
    try:
        font = ImageFont.truetype(path, size)
    except OSError as exc:
        raise OSError(f"cannot load font file {path!r}: {exc}") from exc
    ascent, descent = font.getmetrics()
    return FontHandle(path=path, size=size, line_height=ascent + descent, _font=font)


_font_cache: Dict[Tuple[str, int], FontHandle] = {}


def get_font(cfg: RenderConfig) -> FontHandle:
    """Return a process-wide cached handle for the config's font."""
    key = (cfg.resolved_font_path(), cfg.font_size)
    handle = _font_cache.get(key)
    if handle is None:
        handle = load_font(*key)
        _font_cache[key] = handle
    return handle


def render_line(text: str, cfg: RenderConfig, font: Optional[FontHandle] = None) -> LineImage:
    """Rasterize one sentence into a LineImage.

    The text is rendered verbatim, codepoint by codepoint; no normalization,
    case folding, or segmentation happens first. Newlines are rejected since
    the output is a single line. Empty text produces an all-background image
    of width ``cfg.min_width``.
    """
    if "\n" in text or "\r" in text:
        raise ValueError("render_line input must not contain newline characters")
    if font is None:
        font = get_font(cfg)
    h = font.line_height

    pen = 0.0
    placements = []  # (x_pixel, glyph)
    width = 0
    for i, ch in enumerate(text):
        g = font.glyph(ch)
        x0 = int(round(pen)) - _TILE_MARGIN
        placements.append((x0, g))
        if g.ink_right >= 0:
            width = max(width, x0 + g.ink_right + 1)
        pen += g.advance
        if i + 1 < len(text):
            pen += cfg.inter_char_padding
    width = max(width, int(np.ceil(pen)), cfg.min_width, 1)

    canvas = np.zeros((h, width), dtype=np.float32)
    for x0, g in placements:
        src_lo = max(0, -x0)
        dst_lo = max(0, x0)
        n = min(g.bitmap.shape[1] - src_lo, width - dst_lo)
        if n > 0:
            region = canvas[:, dst_lo:dst_lo + n]
            np.maximum(region, g.bitmap[:, src_lo:src_lo + n], out=region)
    return LineImage(height=h, width=width, pixels=canvas, source_text=text)


def pixel_stats(img: LineImage) -> PixelStats:
    """Mean ink value and fraction of non-background pixels of an image."""
    px = img.pixels
    avg = float(px.mean(dtype=np.float64)) if px.size else 0.0
    nonwhite = float(np.count_nonzero(px) / px.size) if px.size else 0.0
    return PixelStats(avg_density=avg, nonwhite_fraction=nonwhite)


def corpus_pixel_stats(lines, cfg: RenderConfig) -> PixelStats:
    """Pixel statistics pooled over the renders of an iterable of lines."""
    total = 0
    ink_sum = 0.0
    nonwhite = 0
    font = get_font(cfg)
    for line in lines:
        px = render_line(line, cfg, font=font).pixels
        total += px.size
        ink_sum += float(px.sum(dtype=np.float64))
        nonwhite += int(np.count_nonzero(px))
    if total == 0:
        return PixelStats(0.0, 0.0)
    return PixelStats(avg_density=ink_sum / total, nonwhite_fraction=nonwhite / total)


# ---------------------------------------------------------------------------
# PGM dump format (binary "P5", maxval 255), used for goldens and debugging.
# ---------------------------------------------------------------------------


def write_pgm(pixels: np.ndarray, path) -> None:
    """Write a [0,1] grayscale array as binary PGM, ink value v -> round(255*v)."""
    arr = np.asarray(pixels)
    if arr.ndim != 2:
        raise ValueError("PGM dump expects a 2-D array")
    data = np.rint(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM written by :func:`write_pgm` back to a [0,1] array."""
    with open(path, "rb") as f:
        raw = f.read()
    parts = raw.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM file")
    w, h = (int(v) for v in parts[1].split())
    maxval = int(parts[2])
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    data = np.frombuffer(parts[3][: w * h], dtype=np.uint8).reshape(h, w)
    return data.astype(np.float32) / 255.0
