"""Two-stage 3D slice matching.

Stage 1 (coarse): every indexed slice is scored with
``dice - HU_ALPHA * hu_distance`` on size-normalized masks; the top-K survive.
Stage 2 (fine): for each survivor, SSIM and NCC are evaluated over an
in-plane rotation sweep of the query (coarse 15-degree pass, then 1-degree
refinement around the best angle); ORB is evaluated once since its
descriptors are rotation-steered. The combined score is a weighted mean of
the three metrics with SSIM/NCC remapped from [-1, 1] to [0, 1].

Slice normalization is rotation invariant: a square window centered on the
mask centroid with side proportional to the maximum centroid-to-foreground
distance, resampled to a fixed size.
"""
from __future__ import annotations

import hashlib
import io
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import CorruptIndex, EmptyCorpus, EmptyForeground
from .image_metrics import (
    SsimParams,
    hu_distance,
    hu_moments,
    ssim_map_from_stats,
    ssim_stats,
    gaussian_filter_valid,
)
from .orb import OrbFeature, OrbParams, orb_detect, orb_match_score
from .preprocess import (
    BinaryMask,
    PreprocessParams,
    content_score,
    resample_bilinear_grid,
    segment_foreground,
)
from .curation import apply_geometric
from .volume_io import AXES, SliceImage, Volume, extract_slice

HU_ALPHA = 0.1
# log-signed Hu distances blow up when a near-zero invariant flips sign, so
# the coarse score caps the Hu term instead of letting it drown the dice term
HU_CAP = 4.0
NORMALIZE_MARGIN = 0.1
MIN_ORB_FEATURES = 8
INDEX_MAGIC = b"FSIX"
INDEX_VERSION = 3


@dataclass(frozen=True)
class MatchParams:
    top_k_coarse: int = 50
    rotation_step: int = 15          # coarse sweep step, degrees
    refine_halfwidth: int = 7        # 1-degree refinement window, degrees
    weights: tuple[float, float, float] = (0.5, 0.3, 0.2)  # ssim, ncc, orb
    candidate_volume_ids: Optional[frozenset[str]] = None
    axes: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        if any(w < 0 for w in self.weights):
            raise ValueError("weights must be nonnegative")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")
        if 360 % self.rotation_step != 0:
            raise ValueError("rotation_step must divide 360")


@dataclass
class MatchResult:
    volume_id: str
    axis: str
    slice_index: int
    best_rotation: float
    dice: float
    hu_dist: float
    ssim: float
    ncc: float
    orb: float
    combined: float

    def to_dict(self) -> dict:
        return {
            "volume_id": self.volume_id,
            "axis": self.axis,
            "slice_index": self.slice_index,
            "best_rotation": self.best_rotation,
            "dice": self.dice,
            "hu_dist": self.hu_dist,
            "ssim": self.ssim,
            "ncc": self.ncc,
            "orb": self.orb,
            "combined": self.combined,
        }


@dataclass
class TimingReport:
    coarse_seconds: float
    fine_seconds: float
    corpus_slices: int
    candidates: int

    @property
    def slices_per_second(self) -> float:
        total = self.coarse_seconds + self.fine_seconds
        return self.corpus_slices / total if total > 0 else float("inf")

    def to_dict(self) -> dict:
        return {
            "coarse_seconds": self.coarse_seconds,
            "fine_seconds": self.fine_seconds,
            "corpus_slices": self.corpus_slices,
            "candidates": self.candidates,
            "slices_per_second": self.slices_per_second,
        }


@dataclass
class CorpusIndex:
    match_size: int
    orb_size: int
    volume_ids: np.ndarray       # (N,) str
    species: np.ndarray          # (N,) str
    axes: np.ndarray             # (N,) str
    indices: np.ndarray          # (N,) int
    crops: np.ndarray            # (N, S, S) float32
    masks: np.ndarray            # (N, S, S) bool
    canon_masks: np.ndarray      # (N, S, S) bool, principal-axis frame
    hu: np.ndarray               # (N, 7) float64
    ssim_mu: np.ndarray          # (N, h, w) float32
    ssim_var: np.ndarray         # (N, h, w) float32
    ncc_mean: np.ndarray         # (N,)
    ncc_std: np.ndarray          # (N,)
    orb_features: list[list[OrbFeature]]
    content_hash: str = ""
    volume_species: dict[str, str] = field(default_factory=dict)
    volume_dims: dict[str, tuple[int, int, int]] = field(default_factory=dict)

    # cached flattened masks for vectorized dice
    _masks_flat: Optional[np.ndarray] = None
    _mask_sums: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.indices)

    def masks_flat(self) -> tuple[np.ndarray, np.ndarray]:
        if self._masks_flat is None:
            self._masks_flat = self.canon_masks.reshape(len(self), -1).astype(
                np.float32
            )
            self._mask_sums = self.canon_masks.sum(axis=(1, 2)).astype(np.float64)
        return self._masks_flat, self._mask_sums

    def volume_summary(self) -> list[dict]:
        out = []
        for vid in sorted(self.volume_species):
            sel = self.volume_ids == vid
            per_axis = {
                ax: int(((self.axes == ax) & sel).sum())
                for ax in AXES
                if ((self.axes == ax) & sel).any()
            }
            out.append(
                {
                    "id": vid,
                    "species": self.volume_species[vid],
                    "slice_count": int(sel.sum()),
                    "per_axis": per_axis,
                }
            )
        return out


def normalize_for_matching(
    image: SliceImage,
    mask: BinaryMask,
    size: int,
    margin: float = NORMALIZE_MARGIN,
) -> tuple[np.ndarray, np.ndarray]:
    """Rotation-invariant square crop: centered on the mask centroid, side
    2 * max centroid-to-foreground distance * (1 + margin)."""
    rows, cols = np.nonzero(mask.bits)
    if rows.size == 0:
        raise EmptyForeground("cannot normalize an empty mask")
    cy, cx = rows.mean(), cols.mean()
    radius = float(np.sqrt(((rows - cy) ** 2 + (cols - cx) ** 2)).max())
    half = max(radius * (1.0 + margin), 2.0)
    lin = (np.arange(size) / (size - 1)) * 2.0 - 1.0  # [-1, 1]
    rr = cy + lin[:, None] * half + np.zeros((1, size))
    cc = cx + lin[None, :] * half + np.zeros((size, 1))
    crop = resample_bilinear_grid(image.pixels.astype(np.float64), rr, cc, fill=0.0)
    mask_n = (
        resample_bilinear_grid(mask.bits.astype(np.float64), rr, cc, fill=0.0) >= 0.5
    )
    return crop.astype(np.float32), mask_n


def canonical_mask(mask: np.ndarray) -> np.ndarray:
    """Rotate a normalized mask into its principal-axis frame.

    Dice between two rotated views of the same shape is then comparable,
    which keeps the coarse stage from pruning the true slice when the query
    arrives rotated. The residual 180-degree ambiguity is resolved by the
    sign of the third moment along the principal axis; near-symmetric masks
    stay where the moments put them.
    """
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        return mask
    dx = xs - xs.mean()
    dy = ys - ys.mean()
    theta = 0.5 * np.arctan2(
        2.0 * float((dx * dy).sum()),
        float((dx * dx).sum()) - float((dy * dy).sum()),
    )
    img = SliceImage(pixels=mask.astype(np.float32))
    canon = apply_geometric(img, angle_deg=-float(np.degrees(theta))).pixels >= 0.5
    ys, xs = np.nonzero(canon)
    if ys.size and float(((xs - xs.mean()) ** 3).sum()) < 0.0:
        canon = canon[::-1, ::-1]
    return canon


def build_corpus_index(
    volumes: Sequence[Volume],
    pre_params: PreprocessParams = PreprocessParams(),
    match_size: int = 64,
    orb_size: int = 224,
    axes: tuple[str, ...] = ("Z",),
    ssim_params: SsimParams = SsimParams(),
    orb_params: OrbParams = OrbParams(),
    progress: Optional[Callable[[float], None]] = None,
) -> CorpusIndex:
    vids, specs, axs, idxs = [], [], [], []
    crops, masks, canons, hus, orbs = [], [], [], [], []
    volume_species = {}
    volume_dims = {}
    total = sum(
        v.header.dims[AXES.index(ax)] for v in volumes for ax in axes
    )
    done = 0
    for vol in volumes:
        volume_species[vol.volume_id] = vol.species
        volume_dims[vol.volume_id] = tuple(vol.header.dims)
        for ax in axes:
            dim = vol.header.dims[AXES.index(ax)]
            for i in range(dim):
                done += 1
                sl = extract_slice(vol, ax, i)
                if content_score(sl) < pre_params.content_min_fraction:
                    continue
                try:
                    mask = segment_foreground(sl, pre_params)
                except EmptyForeground:
                    continue
                crop, mask_n = normalize_for_matching(sl, mask, match_size)
                if not mask_n.any():
                    continue
                vids.append(vol.volume_id)
                specs.append(vol.species)
                axs.append(ax)
                idxs.append(i)
                crops.append(crop)
                masks.append(mask_n)
                canons.append(canonical_mask(mask_n))
                hus.append(hu_moments(mask_n))
                # keypoints come from a larger crop: the descriptor pattern
                # needs a wide border margin, which would exclude most of a
                # small matching crop
                orb_crop, _ = normalize_for_matching(sl, mask, orb_size)
                orbs.append(orb_detect(SliceImage(pixels=orb_crop), orb_params))
            if progress:
                progress(done / max(1, total))

    if not crops:
        raise EmptyCorpus("no slice survived content filtering")

    crop_stack = np.stack(crops).astype(np.float32)
    mu, var = ssim_stats(crop_stack.astype(np.float64), ssim_params)
    index = CorpusIndex(
        match_size=match_size,
        orb_size=orb_size,
        volume_ids=np.array(vids),
        species=np.array(specs),
        axes=np.array(axs),
        indices=np.array(idxs, dtype=np.int64),
        crops=crop_stack,
        masks=np.stack(masks),
        canon_masks=np.stack(canons),
        hu=np.stack(hus),
        ssim_mu=mu.astype(np.float32),
        ssim_var=var.astype(np.float32),
        ncc_mean=crop_stack.reshape(len(crops), -1).mean(axis=1).astype(np.float64),
        ncc_std=crop_stack.reshape(len(crops), -1).std(axis=1).astype(np.float64),
        orb_features=orbs,
        content_hash=corpus_content_hash(
            volumes, pre_params, match_size, orb_size, axes
        ),
        volume_species=volume_species,
        volume_dims=volume_dims,
    )
    return index


def corpus_content_hash(
    volumes: Sequence[Volume],
    pre_params: PreprocessParams,
    match_size: int,
    orb_size: int,
    axes: tuple[str, ...],
) -> str:
    h = hashlib.sha256()
    h.update(
        f"v{INDEX_VERSION}|{match_size}|{orb_size}|{','.join(axes)}"
        f"|{pre_params}".encode()
    )
    for vol in volumes:
        h.update(vol.volume_id.encode())
        h.update(np.ascontiguousarray(vol.raw_voxels).tobytes())
    return h.hexdigest()


def save_index(index: CorpusIndex, path) -> None:
    kp_meta, desc_chunks, offsets = [], [], [0]
    for feats in index.orb_features:
        for f in feats:
            kp_meta.append((f.row, f.col, f.response, f.orientation))
            desc_chunks.append(np.packbits(f.descriptor))
        offsets.append(offsets[-1] + len(feats))
    buf = io.BytesIO()
    np.savez(
        buf,
        match_size=np.int64(index.match_size),
        orb_size=np.int64(index.orb_size),
        volume_ids=index.volume_ids,
        species=index.species,
        axes=index.axes,
        indices=index.indices,
        crops=index.crops,
        masks=index.masks,
        canon_masks=index.canon_masks,
        hu=index.hu,
        ssim_mu=index.ssim_mu,
        ssim_var=index.ssim_var,
        ncc_mean=index.ncc_mean,
        ncc_std=index.ncc_std,
        kp_meta=np.array(kp_meta, dtype=np.float64).reshape(-1, 4),
        descriptors=(
            np.stack(desc_chunks) if desc_chunks else np.zeros((0, 32), np.uint8)
        ),
        orb_offsets=np.array(offsets, dtype=np.int64),
        content_hash=np.array(index.content_hash),
        volume_species=np.array(json.dumps(index.volume_species)),
        volume_dims=np.array(
            json.dumps({k: list(v) for k, v in index.volume_dims.items()})
        ),
    )
    payload = buf.getvalue()
    digest = hashlib.sha256(payload).digest()
    header = INDEX_MAGIC + INDEX_VERSION.to_bytes(4, "little") + digest
    Path(path).write_bytes(header + payload)


def load_index(path) -> CorpusIndex:
    data = Path(path).read_bytes()
    if len(data) < 40 or data[:4] != INDEX_MAGIC:
        raise CorruptIndex("bad index magic")
    version = int.from_bytes(data[4:8], "little")
    if version != INDEX_VERSION:
        raise CorruptIndex(f"index schema version {version} != {INDEX_VERSION}")
    digest, payload = data[8:40], data[40:]
    if hashlib.sha256(payload).digest() != digest:
        raise CorruptIndex("index checksum mismatch")
    z = np.load(io.BytesIO(payload), allow_pickle=False)
    offsets = z["orb_offsets"]
    kp_meta = z["kp_meta"]
    descriptors = z["descriptors"]
    orb_features: list[list[OrbFeature]] = []
    for i in range(len(offsets) - 1):
        feats = []
        for j in range(int(offsets[i]), int(offsets[i + 1])):
            r, c, resp, theta = kp_meta[j]
            feats.append(
                OrbFeature(
                    row=int(r), col=int(c), response=float(resp),
                    orientation=float(theta),
                    descriptor=np.unpackbits(descriptors[j]).astype(bool),
                )
            )
        orb_features.append(feats)
    return CorpusIndex(
        match_size=int(z["match_size"]),
        orb_size=int(z["orb_size"]),
        volume_ids=z["volume_ids"],
        species=z["species"],
        axes=z["axes"],
        indices=z["indices"],
        crops=z["crops"],
        masks=z["masks"],
        canon_masks=z["canon_masks"],
        hu=z["hu"],
        ssim_mu=z["ssim_mu"],
        ssim_var=z["ssim_var"],
        ncc_mean=z["ncc_mean"],
        ncc_std=z["ncc_std"],
        orb_features=orb_features,
        content_hash=str(z["content_hash"]),
        volume_species=json.loads(str(z["volume_species"])),
        volume_dims={
            k: tuple(v) for k, v in json.loads(str(z["volume_dims"])).items()
        },
    )


def build_or_load_index(path, volumes, **kwargs) -> CorpusIndex:
    """Load a cached index when its content hash matches, else rebuild."""
    pre_params = kwargs.get("pre_params", PreprocessParams())
    match_size = kwargs.get("match_size", 64)
    orb_size = kwargs.get("orb_size", 224)
    axes = kwargs.get("axes", ("Z",))
    expected = corpus_content_hash(volumes, pre_params, match_size, orb_size, axes)
    p = Path(path)
    if p.exists():
        try:
            index = load_index(p)
            if index.content_hash == expected:
                return index
        except CorruptIndex:
            pass
    index = build_corpus_index(volumes, **kwargs)
    save_index(index, p)
    return index


def _candidate_mask(index: CorpusIndex, params: MatchParams) -> np.ndarray:
    sel = np.ones(len(index), dtype=bool)
    if params.candidate_volume_ids is not None:
        sel &= np.isin(index.volume_ids, sorted(params.candidate_volume_ids))
    if params.axes is not None:
        sel &= np.isin(index.axes, list(params.axes))
    return sel


def coarse_rank(
    qmask: np.ndarray,
    qhu: np.ndarray,
    index: CorpusIndex,
    params: MatchParams,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (candidate positions, dice values, hu distances), best first."""
    sel = _candidate_mask(index, params)
    positions = np.nonzero(sel)[0]
    if positions.size == 0:
        raise EmptyCorpus("no corpus slice matches the requested subset")
    masks_flat, mask_sums = index.masks_flat()
    qcanon = canonical_mask(qmask)
    qsum = float(qcanon.sum())
    # the 180-degree disambiguation is unstable for low-skew shapes, so take
    # the better overlap of the canonical mask and its half-turn flip
    denom = mask_sums[positions] + qsum
    inter_a = masks_flat[positions] @ qcanon.reshape(-1).astype(np.float32)
    inter_b = masks_flat[positions] @ qcanon[::-1, ::-1].reshape(-1).astype(
        np.float32
    )
    inter = np.maximum(inter_a, inter_b)
    dice_vals = np.where(denom > 0, 2.0 * inter / denom, 1.0)
    hu_d = np.abs(index.hu[positions] - qhu[None, :]).sum(axis=1)
    scores = dice_vals - HU_ALPHA * np.minimum(hu_d, HU_CAP)
    order = np.argsort(-scores, kind="stable")[: params.top_k_coarse]
    return positions[order], dice_vals[order], hu_d[order]


class _RotationCache:
    """Per-query cache of rotated normalized crops and their SSIM/NCC stats.

    Each rotated crop is sampled directly from the source image on a grid
    rotated about the mask centroid, so every angle costs exactly one
    interpolation. Rotating an already-resampled crop would compound the
    interpolation blur and shift the similarity peak by a few degrees.
    """

    def __init__(
        self,
        image: SliceImage,
        mask: BinaryMask,
        size: int,
        ssim_params: SsimParams,
        margin: float = NORMALIZE_MARGIN,
    ):
        rows, cols = np.nonzero(mask.bits)
        if rows.size == 0:
            raise EmptyForeground("cannot normalize an empty mask")
        self.cy, self.cx = float(rows.mean()), float(cols.mean())
        radius = float(np.sqrt(((rows - self.cy) ** 2 + (cols - self.cx) ** 2)).max())
        self.half = max(radius * (1.0 + margin), 2.0)
        self.pixels = image.pixels.astype(np.float64)
        self.size = size
        self.ssim_params = ssim_params
        self._lin = (np.arange(size) / (size - 1)) * 2.0 - 1.0
        self._cache: dict[int, tuple] = {}

    def get(self, angle: int):
        angle = int(angle) % 360
        if angle not in self._cache:
            t = np.radians(angle)
            u = self._lin[:, None]
            v = self._lin[None, :]
            rr = self.cy + self.half * (u * np.cos(t) - v * np.sin(t))
            cc = self.cx + self.half * (u * np.sin(t) + v * np.cos(t))
            rot = resample_bilinear_grid(self.pixels, rr, cc, fill=0.0)
            mu, var = ssim_stats(rot, self.ssim_params)
            self._cache[angle] = (rot, mu, var, rot.mean(), rot.std())
        return self._cache[angle]


def _batch_scores(
    rot_stack: np.ndarray,          # (R, S, S)
    rot_mu: np.ndarray,             # (R, h, w)
    rot_var: np.ndarray,
    rot_mean: np.ndarray,           # (R,)
    rot_std: np.ndarray,
    cand_crops: np.ndarray,         # (K, S, S)
    cand_mu: np.ndarray,
    cand_var: np.ndarray,
    cand_mean: np.ndarray,
    cand_std: np.ndarray,
    ssim_params: SsimParams,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """SSIM and NCC for every (candidate, rotation) pair.

    Returns (ssim (K,R), ncc (K,R), ncc_valid (K,R))."""
    k = ssim_params.window_size
    prod = rot_stack[None, :, :, :] * cand_crops[:, None, :, :]
    cross = gaussian_filter_valid(prod, k, ssim_params.sigma)
    cov = cross - rot_mu[None] * cand_mu[:, None]
    smap = ssim_map_from_stats(
        rot_mu[None], rot_var[None], cand_mu[:, None], cand_var[:, None], cov,
        ssim_params,
    )
    ssim_vals = smap.mean(axis=(2, 3))

    n = rot_stack.shape[-1] * rot_stack.shape[-2]
    dots = np.einsum("rij,kij->kr", rot_stack, cand_crops)
    denom = n * rot_std[None, :] * cand_std[:, None]
    valid = denom > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        ncc_vals = (dots - n * rot_mean[None, :] * cand_mean[:, None]) / denom
    ncc_vals = np.clip(np.where(valid, ncc_vals, 0.0), -1.0, 1.0)
    return ssim_vals, ncc_vals, valid


def fine_match(
    image: SliceImage,
    mask: BinaryMask,
    candidates: np.ndarray,          # positions into the index
    coarse_dice: np.ndarray,
    coarse_hu: np.ndarray,
    index: CorpusIndex,
    params: MatchParams,
    ssim_params: SsimParams = SsimParams(),
    orb_params: OrbParams = OrbParams(),
    progress: Optional[Callable[[float], None]] = None,
) -> list[MatchResult]:
    if candidates.size == 0:
        return []
    cache = _RotationCache(image, mask, index.match_size, ssim_params)
    coarse_angles = list(range(0, 360, params.rotation_step))
    stack, mus, vars_, means, stds = [], [], [], [], []
    for a in coarse_angles:
        rot, mu, var, mean, std = cache.get(a)
        stack.append(rot)
        mus.append(mu)
        vars_.append(var)
        means.append(mean)
        stds.append(std)
    rot_stack = np.stack(stack)
    rot_mu, rot_var = np.stack(mus), np.stack(vars_)
    rot_mean, rot_std = np.array(means), np.array(stds)

    cand_crops = index.crops[candidates].astype(np.float64)
    cand_mu = index.ssim_mu[candidates].astype(np.float64)
    cand_var = index.ssim_var[candidates].astype(np.float64)
    cand_mean = index.ncc_mean[candidates]
    cand_std = index.ncc_std[candidates]

    w_ssim, w_ncc, w_orb = params.weights
    ssim_vals, ncc_vals, ncc_valid = _batch_scores(
        rot_stack, rot_mu, rot_var, rot_mean, rot_std,
        cand_crops, cand_mu, cand_var, cand_mean, cand_std, ssim_params,
    )
    # pick the best coarse angle per candidate by the rotation-swept part
    sweep_score = w_ssim * (ssim_vals + 1.0) / 2.0 + w_ncc * np.where(
        ncc_valid, (ncc_vals + 1.0) / 2.0, 0.0
    )
    best_idx = sweep_score.argmax(axis=1)

    if progress:
        progress(0.5)

    # 1-degree refinement around each candidate's best coarse angle
    refine: dict[int, list[int]] = {}
    for ci, bi in enumerate(best_idx):
        base = coarse_angles[bi]
        for da in range(-params.refine_halfwidth, params.refine_halfwidth + 1):
            if da == 0:
                continue
            refine.setdefault((base + da) % 360, []).append(ci)

    best_ssim = ssim_vals[np.arange(len(candidates)), best_idx]
    best_ncc = ncc_vals[np.arange(len(candidates)), best_idx]
    best_ncc_valid = ncc_valid[np.arange(len(candidates)), best_idx]
    best_angle = np.array([coarse_angles[b] for b in best_idx], dtype=np.float64)
    best_sweep = sweep_score[np.arange(len(candidates)), best_idx]

    for angle, cand_list in sorted(refine.items()):
        rot, mu, var, mean, std = cache.get(angle)
        sub = np.array(cand_list)
        s_vals, n_vals, n_valid = _batch_scores(
            rot[None], mu[None], var[None], np.array([mean]), np.array([std]),
            cand_crops[sub], cand_mu[sub], cand_var[sub],
            cand_mean[sub], cand_std[sub], ssim_params,
        )
        s_vals, n_vals, n_valid = s_vals[:, 0], n_vals[:, 0], n_valid[:, 0]
        score = w_ssim * (s_vals + 1.0) / 2.0 + w_ncc * np.where(
            n_valid, (n_vals + 1.0) / 2.0, 0.0
        )
        better = score > best_sweep[sub]
        upd = sub[better]
        best_sweep[upd] = score[better]
        best_ssim[upd] = s_vals[better]
        best_ncc[upd] = n_vals[better]
        best_ncc_valid[upd] = n_valid[better]
        best_angle[upd] = angle

    if progress:
        progress(0.8)

    qorb_crop, _ = normalize_for_matching(image, mask, index.orb_size)
    qfeats = orb_detect(SliceImage(pixels=qorb_crop), orb_params)
    results = []
    for ci, pos in enumerate(candidates):
        cand_feats = index.orb_features[pos]
        orb_score = orb_match_score(qfeats, cand_feats, orb_params)
        # with very few keypoints the match ratio is close to a coin flip,
        # so drop ORB from the blend and let SSIM/NCC carry the decision
        orb_ok = (
            orb_score.valid
            and min(len(qfeats), len(cand_feats)) >= MIN_ORB_FEATURES
        )
        terms = [
            (w_ssim, (best_ssim[ci] + 1.0) / 2.0, True),
            (w_ncc, (best_ncc[ci] + 1.0) / 2.0, bool(best_ncc_valid[ci])),
            (w_orb, orb_score.value, orb_ok),
        ]
        wsum = sum(w for w, _, ok in terms if ok)
        combined = (
            sum(w * v for w, v, ok in terms if ok) / wsum if wsum > 0 else 0.0
        )
        # float32 index stats can overshoot 1.0 by ~1e-8 on a self match
        combined = min(1.0, max(0.0, combined))
        results.append(
            MatchResult(
                volume_id=str(index.volume_ids[pos]),
                axis=str(index.axes[pos]),
                slice_index=int(index.indices[pos]),
                best_rotation=float(best_angle[ci]),
                dice=float(coarse_dice[ci]),
                hu_dist=float(coarse_hu[ci]),
                ssim=float(best_ssim[ci]),
                ncc=float(best_ncc[ci]),
                orb=float(orb_score.value),
                combined=float(combined),
            )
        )
    results.sort(key=lambda r: -r.combined)
    if progress:
        progress(1.0)
    return results


def match_query(
    image: SliceImage,
    mask: BinaryMask,
    index: CorpusIndex,
    params: MatchParams = MatchParams(),
    ssim_params: SsimParams = SsimParams(),
    orb_params: OrbParams = OrbParams(),
    progress: Optional[Callable[[float], None]] = None,
) -> tuple[list[MatchResult], TimingReport]:
    _, qmask = normalize_for_matching(image, mask, index.match_size)
    qhu = hu_moments(qmask)

    t0 = time.perf_counter()
    candidates, dice_vals, hu_d = coarse_rank(qmask, qhu, index, params)
    t1 = time.perf_counter()
    if progress:
        progress(0.2)
    results = fine_match(
        image, mask, candidates, dice_vals, hu_d, index, params,
        ssim_params=ssim_params, orb_params=orb_params,
        progress=(lambda f: progress(0.2 + 0.8 * f)) if progress else None,
    )
    t2 = time.perf_counter()
    report = TimingReport(
        coarse_seconds=t1 - t0,
        fine_seconds=t2 - t1,
        corpus_slices=len(index),
        candidates=len(candidates),
    )
    return results, report


def match_many(
    queries: Sequence[tuple[SliceImage, BinaryMask]],
    index: CorpusIndex,
    params: MatchParams = MatchParams(),
    n_jobs: int = 1,
    top_n: int = 5,
) -> list[list[MatchResult]]:
    """Batch matching; parallel over queries."""
    if n_jobs == 1:
        return [match_query(img, m, index, params)[0][:top_n] for img, m in queries]
    from joblib import Parallel, delayed

    # threads, not processes: the index is large and read-only, and the hot
    # loops are numpy/BLAS calls that release the GIL
    return Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_match_one)(img, m, index, params, top_n) for img, m in queries
    )


def _match_one(img, m, index, params, top_n):
    return match_query(img, m, index, params)[0][:top_n]
