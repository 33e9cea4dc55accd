"""Sliding-window decomposition of line images into fixed-width slices.

A window of ``window`` columns moves left to right in steps of ``stride``
columns. Every image yields at least one slice; slices that reach past the
right edge of the image are padded with background. The windows must overlap
or at least tile (``window >= stride``), so no column of ink is ever skipped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .render import BACKGROUND, LineImage


@dataclass(frozen=True)
class SliceConfig:
    window: int
    stride: int

    def __post_init__(self):
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if self.window < self.stride:
            raise ValueError(
                f"window must be >= stride, got window={self.window} stride={self.stride}"
            )


def slice_count(width: int, cfg: SliceConfig) -> int:
    """Number of slices produced for an image of the given width.

    One slice covers any image no wider than the window; otherwise enough
    extra steps are taken for the final window to reach the last column.
    """
    if width < 1:
        raise ValueError(f"width must be >= 1, got {width}")
    if width <= cfg.window:
        return 1
    return int(np.ceil((width - cfg.window) / cfg.stride)) + 1


def slice_image(img: LineImage, cfg: SliceConfig) -> np.ndarray:
    """Cut a line image into an (n, height, window) float32 slice stack.

    Slice ``i`` holds columns ``[i*stride, i*stride + window)`` of the image;
    columns past the right edge are background.
    """
    return slice_pixels(img.pixels, cfg)


def slice_pixels(pixels: np.ndarray, cfg: SliceConfig) -> np.ndarray:
    """Slice a raw (height, width) pixel array; see :func:`slice_image`."""
    h, width = pixels.shape
    n = slice_count(width, cfg)
    # Pad once on the right so every window is a plain view into the buffer.
    needed = (n - 1) * cfg.stride + cfg.window
    if needed > width:
        padded = np.full((h, needed), BACKGROUND, dtype=np.float32)
        padded[:, :width] = pixels
    else:
        padded = pixels
    out = np.empty((n, h, cfg.window), dtype=np.float32)
    for i in range(n):
        out[i] = padded[:, i * cfg.stride : i * cfg.stride + cfg.window]
    return out
