import numpy as np
import pytest

from pixelmt import render
from pixelmt.slicer import SliceConfig, slice_count, slice_image, slice_pixels


def brute_force_count(width, window, stride):
    if width <= window:
        return 1
    n = 1
    start = 0
    while start + window < width:
        start += stride
        n += 1
    return n


def test_count_matches_brute_force():
    rng = np.random.default_rng(7)
    for _ in range(2000):
        width = int(rng.integers(1, 400))
        stride = int(rng.integers(1, 40))
        window = int(rng.integers(stride, 60))
        cfg = SliceConfig(window=window, stride=stride)
        assert slice_count(width, cfg) == brute_force_count(width, window, stride)


def test_narrow_image_is_single_slice():
    cfg = SliceConfig(window=20, stride=10)
    for width in (1, 5, 19, 20):
        pix = np.random.default_rng(width).random((13, width)).astype(np.float32)
        out = slice_pixels(pix, cfg)
        assert out.shape == (1, 13, 20)
        assert np.array_equal(out[0, :, :width], pix)
        assert not out[0, :, width:].any()


def test_slices_are_verbatim_columns():
    cfg = SliceConfig(window=8, stride=3)
    pix = np.random.default_rng(0).random((5, 33)).astype(np.float32)
    out = slice_pixels(pix, cfg)
    n = slice_count(33, cfg)
    assert out.shape == (n, 5, 8)
    padded = np.zeros((5, (n - 1) * cfg.stride + cfg.window), np.float32)
    padded[:, :33] = pix
    for i in range(n):
        lo = i * cfg.stride
        assert np.array_equal(out[i], padded[:, lo : lo + cfg.window])


def test_full_coverage_no_gaps():
    # Every source column lands in at least one slice.
    rng = np.random.default_rng(3)
    for _ in range(200):
        width = int(rng.integers(1, 300))
        stride = int(rng.integers(1, 30))
        window = int(rng.integers(stride, 50))
        cfg = SliceConfig(window=window, stride=stride)
        n = slice_count(width, cfg)
        covered = np.zeros(width, bool)
        for i in range(n):
            lo = i * stride
            covered[lo : min(lo + window, width)] = True
        assert covered.all()
        # The last slice reaches the final source column.
        assert (n - 1) * stride + window >= width


def test_overlap_reconstruction():
    cfg = SliceConfig(window=10, stride=4)
    pix = np.random.default_rng(5).random((7, 41)).astype(np.float32)
    out = slice_pixels(pix, cfg)
    n = out.shape[0]
    canvas = np.full((7, (n - 1) * cfg.stride + cfg.window), np.nan, np.float32)
    for i in range(n):
        lo = i * cfg.stride
        region = canvas[:, lo : lo + cfg.window]
        overlap = ~np.isnan(region)
        assert np.array_equal(region[overlap], out[i][overlap])
        canvas[:, lo : lo + cfg.window] = out[i]
    assert np.array_equal(canvas[:, :41], pix)
    assert not canvas[:, 41:].any()


def test_slice_image_wraps_rendered_line():
    rcfg = render.RenderConfig()
    cfg = SliceConfig(window=25, stride=12)
    img = render.render_line("slice me into windows", rcfg)
    out = slice_image(img, cfg)
    assert out.shape == (slice_count(img.width, cfg), img.height, 25)
    assert np.array_equal(out, slice_pixels(img.pixels, cfg))


def test_config_validation():
    with pytest.raises(ValueError):
        SliceConfig(window=5, stride=6)  # window must cover a stride
    with pytest.raises(ValueError):
        SliceConfig(window=5, stride=0)
    with pytest.raises(ValueError):
        SliceConfig(window=0, stride=0)
    SliceConfig(window=5, stride=5)  # boundary is legal


def test_dtype_and_background_padding():
    cfg = SliceConfig(window=6, stride=6)
    pix = np.ones((3, 8), np.float32)
    out = slice_pixels(pix, cfg)
    assert out.dtype == np.float32
    assert out.shape == (2, 3, 6)
    assert out[1, :, 2:].sum() == 0.0  # pad region is background
    assert out[1, :, :2].sum() == 6.0
