"""Segmentation chain tests. Otsu is checked against a brute-force
between-class-variance search written independently of the vectorized
implementation."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from foramslice.errors import DegenerateImage, EmptyForeground
from foramslice.preprocess import (
    BinaryMask,
    PreprocessParams,
    component_dominance,
    content_score,
    crop_to_bbox,
    mask_bbox,
    median_denoise,
    otsu_threshold,
    preprocess_pipeline,
    resize_bilinear,
    segment_foreground,
)
from foramslice.volume_io import SliceImage


def brute_force_otsu(pixels: np.ndarray) -> float:
    """Exhaustive split-point search in exact rational arithmetic.

    Between-class variance is proportional to (S*n0 - N*s0)^2 / (n0*(N-n0))
    with integer histogram counts, so ties are exact; ties -> lowest bin.
    """
    from fractions import Fraction

    bins = np.minimum((pixels * 256).astype(int), 255).ravel()
    hist = [int(c) for c in np.bincount(bins, minlength=256)]
    N = sum(hist)
    S = sum(i * c for i, c in enumerate(hist))
    best_k, best_var = 0, Fraction(-1)
    n0 = s0 = 0
    for k in range(255):
        n0 += hist[k]
        s0 += k * hist[k]
        if n0 == 0 or n0 == N:
            continue
        var = Fraction((S * n0 - N * s0) ** 2, n0 * (N - n0))
        if var > best_var:
            best_var, best_k = var, k
    return (best_k + 1) / 256


def img(pixels) -> SliceImage:
    return SliceImage(pixels=np.asarray(pixels, dtype=np.float32))


def test_otsu_matches_brute_force_on_random_images(rng):
    for _ in range(50):
        pixels = rng.random((16, 16)).astype(np.float32)
        assert otsu_threshold(img(pixels)) == pytest.approx(
            brute_force_otsu(pixels), abs=1e-12
        )


def test_otsu_matches_brute_force_on_bimodal(rng):
    for _ in range(20):
        lo = rng.normal(0.2, 0.05, size=(20, 20))
        hi = rng.normal(0.8, 0.05, size=(20, 20))
        pick = rng.random((20, 20)) < 0.4
        pixels = np.clip(np.where(pick, hi, lo), 0, 1).astype(np.float32)
        assert otsu_threshold(img(pixels)) == pytest.approx(
            brute_force_otsu(pixels), abs=1e-12
        )


def test_otsu_separates_clean_bimodal():
    pixels = np.full((10, 10), 0.1, dtype=np.float32)
    pixels[:5] = 0.9
    t = otsu_threshold(img(pixels))
    assert 0.1 < t <= 0.9
    fg = pixels >= t
    assert fg[:5].all() and not fg[5:].any()


def test_otsu_rejects_constant():
    with pytest.raises(DegenerateImage):
        otsu_threshold(img(np.full((8, 8), 0.5)))


def test_content_score_is_foreground_fraction():
    pixels = np.full((10, 10), 0.1, dtype=np.float32)
    pixels[:3] = 0.9
    assert content_score(img(pixels)) == pytest.approx(0.3)
    assert content_score(img(np.zeros((4, 4)))) == 0.0


def test_median_denoise_removes_salt_noise():
    pixels = np.full((15, 15), 0.2, dtype=np.float32)
    pixels[7, 7] = 1.0
    out = median_denoise(img(pixels), radius=1)
    assert out.pixels[7, 7] == pytest.approx(0.2)
    assert median_denoise(img(pixels), radius=0).pixels[7, 7] == 1.0


def test_segment_keeps_largest_component_and_fills_holes():
    pixels = np.zeros((30, 30), dtype=np.float32) + 0.05
    pixels[5:20, 5:20] = 0.9       # big blob
    pixels[10:13, 10:13] = 0.05    # hole inside it
    pixels[25:27, 25:27] = 0.9     # small separate blob
    mask = segment_foreground(img(pixels), PreprocessParams(denoise_radius=0))
    assert mask.bits[10:13, 10:13].all()   # hole filled
    assert not mask.bits[25:27, 25:27].any()  # smaller component dropped
    assert mask.bits[5:20, 5:20].all()


def test_sensitivity_shrinks_foreground_monotonically(rng):
    pixels = np.clip(rng.random((40, 40)) * 0.5 + 0.3, 0, 1).astype(np.float32)
    pixels[10:30, 10:30] += 0.3
    pixels = np.clip(pixels, 0, 1)
    image = img(pixels)
    counts = []
    for s in (0.0, 0.3, 0.6, 0.9):
        try:
            counts.append(segment_foreground(image, PreprocessParams(sensitivity=s)).count())
        except EmptyForeground:
            counts.append(0)
    assert all(a >= b for a, b in zip(counts, counts[1:]))


def test_sensitivity_one_can_empty_the_foreground():
    pixels = np.zeros((20, 20), dtype=np.float32)
    pixels[5:15, 5:15] = 0.4  # everything below the shifted threshold at s=1
    t = otsu_threshold(img(pixels))
    shifted = t + 1.0 * (1.0 - t) * 0.5
    if (pixels >= shifted).any():
        pytest.skip("fixture not extreme enough")
    with pytest.raises(EmptyForeground):
        segment_foreground(img(pixels), PreprocessParams(sensitivity=1.0, denoise_radius=0))


def test_component_dominance_values():
    pixels = np.zeros((30, 30), dtype=np.float32) + 0.05
    pixels[5:20, 5:20] = 0.9
    p = PreprocessParams(denoise_radius=0)
    assert component_dominance(img(pixels), p) == pytest.approx(1.0)
    pixels[25, 25] = 0.9
    d = component_dominance(img(pixels), p)
    assert d == pytest.approx(225 / 226)
    assert component_dominance(img(np.zeros((8, 8))), p) == 0.0


def test_mask_bbox_tight_and_with_margin():
    bits = np.zeros((20, 30), dtype=bool)
    bits[4:10, 6:16] = True
    mask = BinaryMask(bits=bits)
    assert mask_bbox(mask) == (4, 9, 6, 15)
    # margin 0.5 of extent per side: rows +-3, cols +-5
    assert mask_bbox(mask, 0.5) == (1, 12, 1, 20)
    # clamped at the frame
    bits2 = np.zeros((10, 10), dtype=bool)
    bits2[0:9, 0:9] = True
    assert mask_bbox(BinaryMask(bits=bits2), 0.5) == (0, 9, 0, 9)
    with pytest.raises(EmptyForeground):
        mask_bbox(BinaryMask(bits=np.zeros((5, 5), dtype=bool)))


def test_crop_to_bbox_extracts_subimage():
    pixels = np.arange(100, dtype=np.float32).reshape(10, 10) / 100
    bits = np.zeros((10, 10), dtype=bool)
    bits[2:5, 3:7] = True
    out = crop_to_bbox(img(pixels), BinaryMask(bits=bits))
    np.testing.assert_array_equal(out.pixels, pixels[2:5, 3:7])


def test_resize_corner_alignment():
    pixels = np.array([[0.0, 1.0], [0.0, 1.0]], dtype=np.float32)
    out = resize_bilinear(img(pixels), 5)
    # corners map to corners; interior is the linear ramp
    np.testing.assert_allclose(out.pixels[0], [0, 0.25, 0.5, 0.75, 1.0], atol=1e-6)
    np.testing.assert_allclose(out.pixels[:, 0], 0.0, atol=1e-6)
    np.testing.assert_allclose(out.pixels[:, -1], 1.0, atol=1e-6)


def test_resize_identity_when_size_matches(rng):
    pixels = rng.random((7, 7)).astype(np.float32)
    out = resize_bilinear(img(pixels), 7)
    np.testing.assert_allclose(out.pixels, pixels, atol=1e-6)


def test_resize_to_singleton_samples_center():
    pixels = np.zeros((5, 5), dtype=np.float32)
    pixels[2, 2] = 1.0
    assert resize_bilinear(img(pixels), 1).pixels[0, 0] == pytest.approx(1.0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), size=st.integers(12, 40))
def test_resize_stays_in_range(seed, size):
    r = np.random.default_rng(seed)
    pixels = r.random((size, size)).astype(np.float32)
    out = resize_bilinear(img(pixels), 17)
    assert out.pixels.min() >= 0.0 and out.pixels.max() <= 1.0


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_otsu_property_threshold_in_range_and_nonempty_classes(seed):
    r = np.random.default_rng(seed)
    pixels = r.random((12, 12)).astype(np.float32)
    t = otsu_threshold(img(pixels))
    assert 0.0 < t <= 1.0
    assert (pixels >= t).any() and (pixels < t).any()


def test_pipeline_accepts_good_slice():
    pixels = np.zeros((60, 60), dtype=np.float32) + 0.05
    pixels[15:45, 20:50] = 0.8
    result = preprocess_pipeline(img(pixels), PreprocessParams(target_size=32))
    assert not result.report.rejected
    assert result.image.pixels.shape == (32, 32)
    assert result.mask.bits.shape == (32, 32)
    assert result.mask.bits.any()
    assert result.report.bbox is not None


def test_pipeline_rejects_degenerate_and_low_content():
    flat = preprocess_pipeline(img(np.full((20, 20), 0.4)), PreprocessParams())
    assert flat.report.rejected and flat.report.reason == "degenerate image"
    assert flat.image is None

    pixels = np.zeros((40, 40), dtype=np.float32)
    pixels[0, 0] = 1.0  # one bright pixel: content 1/1600 < 1%
    low = preprocess_pipeline(img(pixels), PreprocessParams())
    assert low.report.rejected and low.report.reason == "low content"


def test_pipeline_reports_empty_foreground_at_max_sensitivity():
    pixels = np.zeros((30, 30), dtype=np.float32)
    pixels[10:20, 10:20] = 0.4
    result = preprocess_pipeline(
        img(pixels), PreprocessParams(sensitivity=1.0, denoise_radius=0)
    )
    if not result.report.rejected:
        pytest.skip("fixture not extreme enough")
    assert result.report.reason == "empty foreground"


def test_params_validation():
    with pytest.raises(ValueError):
        PreprocessParams(sensitivity=1.5)
    with pytest.raises(ValueError):
        PreprocessParams(target_size=0)
    with pytest.raises(ValueError):
        PreprocessParams(denoise_radius=-1)
