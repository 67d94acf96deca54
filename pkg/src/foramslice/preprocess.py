"""Slice-quality and segmentation chain.

Otsu thresholding over a fixed 256-bin histogram, low-content rejection,
median denoising, sensitivity-controlled foreground segmentation
(largest 4-connected component + hole fill), bounding-box cropping and
bilinear resizing.

The Otsu threshold returned is the upper edge of the winning bin, so a pixel
is foreground iff ``pixel >= threshold``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

from .errors import DegenerateImage, EmptyForeground
from .volume_io import SliceImage

N_BINS = 256
# Fraction of the headroom (1 - t_otsu) added to the threshold at
# sensitivity=1; keeps the shifted threshold strictly below 1.0.
SENSITIVITY_GAIN = 0.5

_CROSS = ndimage.generate_binary_structure(2, 1)  # 4-connectivity


@dataclass(frozen=True)
class PreprocessParams:
    sensitivity: float = 0.0
    content_min_fraction: float = 0.01
    target_size: int = 224
    denoise_radius: int = 1
    crop_margin: float = 0.05

    def __post_init__(self):
        if not 0.0 <= self.sensitivity <= 1.0:
            raise ValueError("sensitivity must be in [0, 1]")
        if not 0.0 <= self.content_min_fraction <= 1.0:
            raise ValueError("content_min_fraction must be in [0, 1]")
        if self.target_size < 1:
            raise ValueError("target_size must be >= 1")
        if self.denoise_radius < 0:
            raise ValueError("denoise_radius must be >= 0")


@dataclass
class BinaryMask:
    bits: np.ndarray  # bool, same shape as the source image

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    def count(self) -> int:
        return int(self.bits.sum())


@dataclass
class PreprocessReport:
    content_score: float
    threshold: Optional[float]
    bbox: Optional[tuple[int, int, int, int]]  # (row0, row1, col0, col1) inclusive
    rejected: bool
    reason: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "content_score": self.content_score,
            "threshold": self.threshold,
            "bbox": list(self.bbox) if self.bbox else None,
            "rejected": self.rejected,
            "reason": self.reason,
        }


@dataclass
class PreprocessResult:
    image: Optional[SliceImage]
    mask: Optional[BinaryMask]
    report: PreprocessReport


def _histogram(pixels: np.ndarray) -> np.ndarray:
    bins = np.minimum((pixels * N_BINS).astype(np.int64), N_BINS - 1)
    return np.bincount(bins.ravel(), minlength=N_BINS).astype(np.float64)


def otsu_threshold(image: SliceImage) -> float:
    """Threshold maximizing between-class variance; ties go to the lowest bin.

    Returned as the upper edge (k+1)/256 of the winning bin k, so the
    foreground predicate is ``pixel >= threshold``.
    """
    pixels = image.pixels
    if pixels.size == 0 or float(pixels.max()) == float(pixels.min()):
        raise DegenerateImage("all pixels equal")
    hist = _histogram(pixels)
    total = hist.sum()
    p = hist / total
    omega = np.cumsum(p)  # class-0 weight for threshold at bin k
    mu = np.cumsum(p * np.arange(N_BINS))
    mu_t = mu[-1]
    # between-class variance for k = 0..254 (split after bin k)
    omega0 = omega[:-1]
    omega1 = 1.0 - omega0
    with np.errstate(divide="ignore", invalid="ignore"):
        sigma_b = (mu_t * omega0 - mu[:-1]) ** 2 / (omega0 * omega1)
    sigma_b[~np.isfinite(sigma_b)] = -1.0
    k = int(np.argmax(sigma_b))  # argmax returns the lowest index on ties
    return (k + 1) / N_BINS


def content_score(image: SliceImage) -> float:
    """Fraction of pixels at or above the Otsu threshold; 0 for degenerate input."""
    try:
        t = otsu_threshold(image)
    except DegenerateImage:
        return 0.0
    return float((image.pixels >= t).mean())


def median_denoise(image: SliceImage, radius: int) -> SliceImage:
    if radius <= 0:
        return image
    size = 2 * radius + 1
    out = ndimage.median_filter(image.pixels, size=size, mode="reflect")
    return SliceImage(pixels=out.astype(np.float32), provenance=image.provenance)


def segment_foreground(image: SliceImage, params: PreprocessParams) -> BinaryMask:
    """Denoise, threshold with sensitivity offset, keep the largest
    4-connected component and fill its interior holes."""
    denoised = median_denoise(image, params.denoise_radius)
    t = otsu_threshold(denoised)
    t_shifted = t + params.sensitivity * (1.0 - t) * SENSITIVITY_GAIN
    fg = denoised.pixels >= t_shifted
    if not fg.any():
        raise EmptyForeground("no pixel above shifted threshold")
    labels, n = ndimage.label(fg, structure=_CROSS)
    if n > 1:
        counts = np.bincount(labels.ravel())
        counts[0] = 0
        fg = labels == int(np.argmax(counts))
    fg = ndimage.binary_fill_holes(fg)
    return BinaryMask(bits=fg)


def component_dominance(image: SliceImage, params: PreprocessParams) -> float:
    """Fraction of thresholded foreground held by its largest component.

    Values near 1 mean segmentation is stable; values well below 1 mean the
    slice is scattered specks and the largest-component choice can flip under
    small perturbations of the image.
    """
    denoised = median_denoise(image, params.denoise_radius)
    try:
        t = otsu_threshold(denoised)
    except DegenerateImage:
        return 0.0
    fg = denoised.pixels >= t
    labels, n = ndimage.label(fg, structure=_CROSS)
    if n == 0:
        return 0.0
    counts = np.bincount(labels.ravel())
    counts[0] = 0
    return float(counts.max() / counts.sum())


def mask_bbox(
    mask: BinaryMask, margin_fraction: float = 0.0
) -> tuple[int, int, int, int]:
    """Tight bbox of the mask expanded by margin_fraction per side, clamped.

    Returns inclusive (row0, row1, col0, col1).
    """
    rows = np.any(mask.bits, axis=1)
    cols = np.any(mask.bits, axis=0)
    if not rows.any():
        raise EmptyForeground("empty mask")
    r0, r1 = int(np.argmax(rows)), int(len(rows) - 1 - np.argmax(rows[::-1]))
    c0, c1 = int(np.argmax(cols)), int(len(cols) - 1 - np.argmax(cols[::-1]))
    mr = int(round(margin_fraction * (r1 - r0 + 1)))
    mc = int(round(margin_fraction * (c1 - c0 + 1)))
    r0 = max(0, r0 - mr)
    r1 = min(mask.height - 1, r1 + mr)
    c0 = max(0, c0 - mc)
    c1 = min(mask.width - 1, c1 + mc)
    return (r0, r1, c0, c1)


def crop_to_bbox(
    image: SliceImage, mask: BinaryMask, margin_fraction: float = 0.0
) -> SliceImage:
    r0, r1, c0, c1 = mask_bbox(mask, margin_fraction)
    sub = image.pixels[r0 : r1 + 1, c0 : c1 + 1].copy()
    return SliceImage(pixels=sub, provenance=image.provenance)


def resize_bilinear(image: SliceImage, target_size: int) -> SliceImage:
    """Bilinear resize to target_size x target_size, corner-aligned sampling.

    Output pixel (i, j) samples the input at
    (i*(H-1)/(target-1), j*(W-1)/(target-1)); a singleton output axis samples
    the input center. Values are clamped to [0, 1].
    """
    out = resample_bilinear_grid(
        image.pixels, *_corner_aligned_grid(image.pixels.shape, target_size)
    )
    return SliceImage(
        pixels=np.clip(out, 0.0, 1.0).astype(np.float32), provenance=image.provenance
    )


def _corner_aligned_grid(shape: tuple[int, int], target: int):
    h, w = shape
    if target == 1:
        rr = np.array([(h - 1) / 2.0])
        cc = np.array([(w - 1) / 2.0])
    else:
        rr = np.arange(target) * (h - 1) / (target - 1)
        cc = np.arange(target) * (w - 1) / (target - 1)
    return np.meshgrid(rr, cc, indexing="ij")


def resample_bilinear_grid(
    pixels: np.ndarray, rows: np.ndarray, cols: np.ndarray, fill: float = 0.0
) -> np.ndarray:
    """Sample pixels at fractional (rows, cols); out-of-frame samples = fill."""
    h, w = pixels.shape
    inside = (rows >= 0) & (rows <= h - 1) & (cols >= 0) & (cols <= w - 1)
    r = np.clip(rows, 0, h - 1)
    c = np.clip(cols, 0, w - 1)
    r0 = np.floor(r).astype(np.int64)
    c0 = np.floor(c).astype(np.int64)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = r - r0
    fc = c - c0
    p = pixels
    out = (
        p[r0, c0] * (1 - fr) * (1 - fc)
        + p[r0, c1] * (1 - fr) * fc
        + p[r1, c0] * fr * (1 - fc)
        + p[r1, c1] * fr * fc
    )
    return np.where(inside, out, fill)


def preprocess_pipeline(
    image: SliceImage, params: PreprocessParams
) -> PreprocessResult:
    """content filter -> segment -> crop -> resize; failures end up in the report."""
    try:
        threshold = otsu_threshold(image)
    except DegenerateImage:
        report = PreprocessReport(
            content_score=0.0, threshold=None, bbox=None,
            rejected=True, reason="degenerate image",
        )
        return PreprocessResult(image=None, mask=None, report=report)

    score = float((image.pixels >= threshold).mean())
    if score < params.content_min_fraction:
        report = PreprocessReport(
            content_score=score, threshold=threshold, bbox=None,
            rejected=True, reason="low content",
        )
        return PreprocessResult(image=None, mask=None, report=report)

    try:
        mask = segment_foreground(image, params)
    except EmptyForeground:
        report = PreprocessReport(
            content_score=score, threshold=threshold, bbox=None,
            rejected=True, reason="empty foreground",
        )
        return PreprocessResult(image=None, mask=None, report=report)

    bbox = mask_bbox(mask, params.crop_margin)
    r0, r1, c0, c1 = bbox
    cropped = SliceImage(
        pixels=image.pixels[r0 : r1 + 1, c0 : c1 + 1].copy(),
        provenance=image.provenance,
    )
    cropped_mask = mask.bits[r0 : r1 + 1, c0 : c1 + 1]
    resized = resize_bilinear(cropped, params.target_size)
    mask_resized = resample_bilinear_grid(
        cropped_mask.astype(np.float32),
        *_corner_aligned_grid(cropped_mask.shape, params.target_size),
    ) >= 0.5
    report = PreprocessReport(
        content_score=score, threshold=threshold, bbox=bbox, rejected=False
    )
    return PreprocessResult(
        image=resized, mask=BinaryMask(bits=mask_resized), report=report
    )
