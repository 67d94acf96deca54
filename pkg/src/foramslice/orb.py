"""Single-scale ORB: FAST-9 corners, Harris selection, intensity-centroid
orientation and 256-bit steered binary descriptors matched by Hamming
distance with a mutual-nearest-neighbor + Lowe ratio test.

No image pyramid: matcher inputs are size-normalized crops, so scale is
handled upstream.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .orb_pattern import BRIEF_PAIRS
from .image_metrics import MetricScore
from .volume_io import SliceImage

# Bresenham circle of radius 3, clockwise from the top, as (row, col) offsets.
_CIRCLE16 = [
    (-3, 0), (-3, 1), (-2, 2), (-1, 3), (0, 3), (1, 3), (2, 2), (3, 1),
    (3, 0), (3, -1), (2, -2), (1, -3), (0, -3), (-1, -3), (-2, -2), (-3, -1),
]
_FAST_ARC = 9
_PATCH_RADIUS = 15
# rotated BRIEF offsets can reach radius ~18.4; keypoints closer to the
# border than this are dropped before descriptor extraction
_BORDER = 20
N_ORIENTATION_BINS = 12  # 30-degree quantization of the steering angle


@dataclass(frozen=True)
class OrbParams:
    fast_threshold: float = 0.08
    n_keypoints: int = 256
    ratio: float = 0.8
    harris_k: float = 0.04


@dataclass
class OrbFeature:
    row: int
    col: int
    response: float
    orientation: float  # radians
    descriptor: np.ndarray  # bool, shape (256,)


def _box_filter(x: np.ndarray, radius: int) -> np.ndarray:
    """Same-size box mean filter with edge replication, via integral images."""
    size = 2 * radius + 1
    p = np.pad(x, radius, mode="edge")
    c = np.cumsum(np.cumsum(p, axis=0), axis=1)
    c = np.pad(c, ((1, 0), (1, 0)))
    h, w = x.shape
    s = (
        c[size : size + h, size : size + w]
        - c[0:h, size : size + w]
        - c[size : size + h, 0:w]
        + c[0:h, 0:w]
    )
    return s / (size * size)


def _fast_corners(img: np.ndarray, threshold: float) -> np.ndarray:
    """Boolean corner map (same shape as img, borders False) for FAST-9."""
    h, w = img.shape
    corners = np.zeros((h, w), dtype=bool)
    if h < 7 or w < 7:
        return corners
    center = img[3 : h - 3, 3 : w - 3]
    ring = np.stack(
        [img[3 + dr : h - 3 + dr, 3 + dc : w - 3 + dc] for dr, dc in _CIRCLE16]
    )
    brighter = ring > center + threshold
    darker = ring < center - threshold
    hit = np.zeros(center.shape, dtype=bool)
    for seq in (brighter, darker):
        ext = np.concatenate([seq, seq[: _FAST_ARC - 1]], axis=0)
        for i in range(16):
            hit |= ext[i : i + _FAST_ARC].all(axis=0)
    corners[3 : h - 3, 3 : w - 3] = hit
    return corners


def _harris_response(img: np.ndarray, k: float) -> np.ndarray:
    gy, gx = np.gradient(img)
    ixx = _box_filter(gx * gx, 2)
    iyy = _box_filter(gy * gy, 2)
    ixy = _box_filter(gx * gy, 2)
    return ixx * iyy - ixy * ixy - k * (ixx + iyy) ** 2


@lru_cache(maxsize=1)
def _patch_grids():
    d = np.arange(-_PATCH_RADIUS, _PATCH_RADIUS + 1)
    dy, dx = np.meshgrid(d, d, indexing="ij")
    disk = dy * dy + dx * dx <= _PATCH_RADIUS * _PATCH_RADIUS
    return dy * disk, dx * disk, disk


@lru_cache(maxsize=1)
def _rotated_pairs():
    """Integer BRIEF offsets pre-rotated for each orientation bin.

    Returns arrays of shape (bins, 256) for r1, c1, r2, c2.
    """
    r1 = BRIEF_PAIRS[:, 0].astype(np.float64)
    c1 = BRIEF_PAIRS[:, 1].astype(np.float64)
    r2 = BRIEF_PAIRS[:, 2].astype(np.float64)
    c2 = BRIEF_PAIRS[:, 3].astype(np.float64)
    out = []
    for b in range(N_ORIENTATION_BINS):
        theta = 2.0 * math.pi * b / N_ORIENTATION_BINS
        cos, sin = math.cos(theta), math.sin(theta)
        # rotate (x=c, y=r) counter-clockwise in x/y, y pointing down
        rot = lambda r, c: (
            np.round(c * sin + r * cos).astype(np.int64),
            np.round(c * cos - r * sin).astype(np.int64),
        )
        out.append((*rot(r1, c1), *rot(r2, c2)))
    R1 = np.stack([o[0] for o in out])
    C1 = np.stack([o[1] for o in out])
    R2 = np.stack([o[2] for o in out])
    C2 = np.stack([o[3] for o in out])
    return R1, C1, R2, C2


def orb_detect(image, params: OrbParams = OrbParams()) -> list[OrbFeature]:
    img = image.pixels if isinstance(image, SliceImage) else np.asarray(image)
    img = img.astype(np.float64)
    h, w = img.shape
    corners = _fast_corners(img, params.fast_threshold)
    # keep only keypoints with full descriptor support
    corners[:_BORDER, :] = False
    corners[-_BORDER:, :] = False
    corners[:, :_BORDER] = False
    corners[:, -_BORDER:] = False
    rows, cols = np.nonzero(corners)
    if rows.size == 0:
        return []

    response = _harris_response(img, params.harris_k)[rows, cols]
    order = np.argsort(-response, kind="stable")[: params.n_keypoints]
    rows, cols, response = rows[order], cols[order], response[order]

    dy, dx, disk = _patch_grids()
    d = np.arange(-_PATCH_RADIUS, _PATCH_RADIUS + 1)
    patches = img[
        rows[:, None, None] + d[None, :, None],
        cols[:, None, None] + d[None, None, :],
    ]
    patches = patches * disk
    m10 = (patches * dx).sum(axis=(1, 2))
    m01 = (patches * dy).sum(axis=(1, 2))
    theta = np.arctan2(m01, m10)

    bins = np.round(theta / (2.0 * math.pi / N_ORIENTATION_BINS)).astype(np.int64)
    bins %= N_ORIENTATION_BINS
    theta_q = bins * (2.0 * math.pi / N_ORIENTATION_BINS)

    smoothed = _box_filter(img, 2)
    R1, C1, R2, C2 = _rotated_pairs()
    v1 = smoothed[rows[:, None] + R1[bins], cols[:, None] + C1[bins]]
    v2 = smoothed[rows[:, None] + R2[bins], cols[:, None] + C2[bins]]
    descriptors = v1 < v2

    return [
        OrbFeature(
            row=int(r), col=int(c), response=float(resp),
            orientation=float(t), descriptor=d,
        )
        for r, c, resp, t, d in zip(rows, cols, response, theta_q, descriptors)
    ]


def _hamming_matrix(da: np.ndarray, db: np.ndarray) -> np.ndarray:
    # da: (na, 256) bool; db: (nb, 256) bool
    return (da[:, None, :] != db[None, :, :]).sum(axis=2)


def orb_match_score(
    feats_a: list[OrbFeature],
    feats_b: list[OrbFeature],
    params: OrbParams = OrbParams(),
) -> MetricScore:
    """Mutual-nearest-neighbor Hamming matching with a Lowe ratio test.

    Score = matches / max(1, min(len(a), len(b))), clamped to [0, 1].
    """
    if not feats_a or not feats_b:
        return MetricScore(0.0, "orb", valid=False)
    da = np.stack([f.descriptor for f in feats_a])
    db = np.stack([f.descriptor for f in feats_b])
    dist = _hamming_matrix(da, db)

    best_ab = dist.argmin(axis=1)
    best_ba = dist.argmin(axis=0)
    matches = 0
    for i, j in enumerate(best_ab):
        if best_ba[j] != i:
            continue
        d1 = dist[i, j]
        if db.shape[0] >= 2:
            row = dist[i].copy()
            row[j] = np.iinfo(row.dtype).max if row.dtype.kind in "iu" else np.inf
            d2 = row.min()
            if d1 > 0 and d1 > params.ratio * d2:
                continue
        matches += 1
    denom = max(1, min(len(feats_a), len(feats_b)))
    return MetricScore(min(1.0, matches / denom), "orb")
