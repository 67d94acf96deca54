"""Similarity primitives: Dice, Hu moment invariants, SSIM and NCC.

All implementations are self-contained numpy; the windowed SSIM statistics are
computed with valid-mode separable Gaussian filtering expressed as matrix
products so callers can batch stacks of images cheaply.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConstantInput, EmptyMask, ShapeMismatch, TooSmall
from .preprocess import BinaryMask
from .volume_io import SliceImage

LOG_EPS = 1e-30


@dataclass(frozen=True)
class SsimParams:
    window_size: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 1.0

    def __post_init__(self):
        if self.k1 <= 0 or self.k2 <= 0:
            raise ValueError("K1 and K2 must be > 0")


@dataclass(frozen=True)
class MetricScore:
    value: float
    kind: str
    valid: bool = True


def _pixels(x) -> np.ndarray:
    if isinstance(x, SliceImage):
        return x.pixels
    return np.asarray(x)


def _bits(x) -> np.ndarray:
    if isinstance(x, BinaryMask):
        return x.bits
    return np.asarray(x, dtype=bool)


# --- Dice ---

def dice(mask_a, mask_b) -> MetricScore:
    a, b = _bits(mask_a), _bits(mask_b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"dice shapes {a.shape} vs {b.shape}")
    na, nb = int(a.sum()), int(b.sum())
    if na == 0 and nb == 0:
        return MetricScore(1.0, "dice")
    inter = int((a & b).sum())
    return MetricScore(2.0 * inter / (na + nb), "dice")


# --- Hu moments ---

def _central_moments(weights: np.ndarray) -> dict[tuple[int, int], float]:
    h, w = weights.shape
    total = weights.sum()
    if total <= 0:
        raise EmptyMask("mask has no foreground")
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    xbar = float((xs * weights).sum() / total)
    ybar = float((ys * weights).sum() / total)
    dx = xs - xbar
    dy = ys - ybar
    mu = {}
    for p in range(4):
        for q in range(4):
            if p + q <= 3:
                mu[(p, q)] = float((dx**p * dy**q * weights).sum())
    return mu


def hu_moments(mask) -> np.ndarray:
    """Seven Hu invariants of a binary mask, log-signed transformed."""
    weights = _bits(mask).astype(np.float64)
    mu = _central_moments(weights)
    mu00 = mu[(0, 0)]

    def eta(p, q):
        return mu[(p, q)] / mu00 ** (1.0 + (p + q) / 2.0)

    n20, n02, n11 = eta(2, 0), eta(0, 2), eta(1, 1)
    n30, n03, n21, n12 = eta(3, 0), eta(0, 3), eta(2, 1), eta(1, 2)

    a = n30 + n12
    b = n21 + n03
    c = n30 - 3 * n12
    d = 3 * n21 - n03

    h = np.empty(7, dtype=np.float64)
    h[0] = n20 + n02
    h[1] = (n20 - n02) ** 2 + 4 * n11**2
    h[2] = c**2 + d**2
    h[3] = a**2 + b**2
    h[4] = c * a * (a**2 - 3 * b**2) + d * b * (3 * a**2 - b**2)
    h[5] = (n20 - n02) * (a**2 - b**2) + 4 * n11 * a * b
    h[6] = d * a * (a**2 - 3 * b**2) - c * b * (3 * a**2 - b**2)

    return np.sign(h) * np.log10(np.abs(h) + LOG_EPS)


def hu_distance(a: np.ndarray, b: np.ndarray) -> float:
    """L1 distance between two log-signed Hu vectors."""
    return float(np.abs(np.asarray(a) - np.asarray(b)).sum())


# --- SSIM ---

@lru_cache(maxsize=None)
def gaussian_kernel(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size, dtype=np.float64) - half
    k = np.exp(-(x**2) / (2.0 * sigma**2))
    k /= k.sum()
    k.setflags(write=False)
    return k


@lru_cache(maxsize=None)
def _conv_matrix(n: int, size: int, sigma: float) -> np.ndarray:
    """Valid-mode 1D convolution as an (n-size+1, n) matrix."""
    k = gaussian_kernel(size, sigma)
    n_out = n - size + 1
    m = np.zeros((n_out, n), dtype=np.float64)
    for i in range(n_out):
        m[i, i : i + size] = k
    m.setflags(write=False)
    return m


def gaussian_filter_valid(
    x: np.ndarray, size: int = 11, sigma: float = 1.5
) -> np.ndarray:
    """Separable valid-mode Gaussian filter over the last two axes."""
    h, w = x.shape[-2:]
    if h < size or w < size:
        raise TooSmall(f"image {h}x{w} smaller than {size}x{size} window")
    mw = _conv_matrix(w, size, sigma)
    mh = _conv_matrix(h, size, sigma)
    y = x @ mw.T                      # filter along columns
    y = np.swapaxes(np.swapaxes(y, -1, -2) @ mh.T, -1, -2)  # along rows
    return y


def ssim_map_from_stats(mu_a, va, mu_b, vb, cov, params: SsimParams) -> np.ndarray:
    c1 = (params.k1 * params.dynamic_range) ** 2
    c2 = (params.k2 * params.dynamic_range) ** 2
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (va + vb + c2)
    return num / den


def ssim_stats(x: np.ndarray, params: SsimParams) -> tuple[np.ndarray, np.ndarray]:
    """Windowed mean and variance maps of an image (or stack of images)."""
    mu = gaussian_filter_valid(x, params.window_size, params.sigma)
    musq = gaussian_filter_valid(x * x, params.window_size, params.sigma)
    return mu, musq - mu * mu


def ssim(a, b, params: SsimParams = SsimParams()) -> MetricScore:
    """Mean SSIM over all valid (fully inside) windows."""
    pa, pb = _pixels(a).astype(np.float64), _pixels(b).astype(np.float64)
    if pa.shape != pb.shape:
        raise ShapeMismatch(f"ssim shapes {pa.shape} vs {pb.shape}")
    mu_a, va = ssim_stats(pa, params)
    mu_b, vb = ssim_stats(pb, params)
    cov = gaussian_filter_valid(pa * pb, params.window_size, params.sigma) - mu_a * mu_b
    s = ssim_map_from_stats(mu_a, va, mu_b, vb, cov, params)
    return MetricScore(float(s.mean()), "ssim")


# --- NCC ---

def ncc(a, b) -> MetricScore:
    """Zero-mean normalized cross-correlation with population sigma."""
    pa, pb = _pixels(a).astype(np.float64), _pixels(b).astype(np.float64)
    if pa.shape != pb.shape:
        raise ShapeMismatch(f"ncc shapes {pa.shape} vs {pb.shape}")
    sa, sb = pa.std(), pb.std()
    if sa == 0.0 or sb == 0.0:
        return MetricScore(0.0, "ncc", valid=False)
    n = pa.size
    v = float(((pa - pa.mean()) * (pb - pb.mean())).sum() / (n * sa * sb))
    return MetricScore(max(-1.0, min(1.0, v)), "ncc")
