"""Specimen-level train/val/test splitting and offline augmentation kernels.

Splitting assigns every specimen (all of its slices) to exactly one split and
minimizes the weighted sum of per-split coefficients of variation of the
per-species slice counts. Small instances are solved by exhaustive
enumeration; larger ones fall back to seeded multi-restart local search.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch, ZeroMean
from .volume_io import SliceImage
from .preprocess import resample_bilinear_grid

SPLITS = ("train", "val", "test")


def coefficient_of_variation(counts) -> float:
    """100 * sample standard deviation (n-1 denominator) / mean, in percent."""
    arr = np.asarray(counts, dtype=np.float64)
    if arr.size == 0:
        raise ZeroMean("empty counts")
    mean = arr.mean()
    if mean <= 0:
        raise ZeroMean("mean must be > 0")
    if arr.size == 1:
        return 0.0
    return float(100.0 * arr.std(ddof=1) / mean)


@dataclass(frozen=True)
class SpecimenStats:
    specimen_id: str
    species: str
    usable_slice_count: int


@dataclass
class SplitAssignment:
    assignment: dict[str, str]  # specimen_id -> split
    per_split_species_counts: dict[str, dict[str, int]]
    cv: dict[str, float]  # split -> percent
    objective: float
    infeasible_species: list[str] = field(default_factory=list)
    fractions_ok: bool = True
    exhaustive: bool = False

    def split_totals(self) -> dict[str, int]:
        return {
            s: sum(self.per_split_species_counts[s].values()) for s in SPLITS
        }

    def to_json(self) -> str:
        def finite(x):
            # empty splits have undefined CV; emit null, not bare NaN
            return x if math.isfinite(x) else None

        return json.dumps(
            {
                "assignment": self.assignment,
                "per_split_species_counts": self.per_split_species_counts,
                "cv_percent": {k: finite(v) for k, v in self.cv.items()},
                "objective": finite(self.objective),
                "infeasible_species": self.infeasible_species,
                "fractions_ok": self.fractions_ok,
                "exhaustive": self.exhaustive,
                "split_totals": self.split_totals(),
            },
            indent=2,
            sort_keys=True,
        )

    @staticmethod
    def from_json(text: str) -> "SplitAssignment":
        d = json.loads(text)
        return SplitAssignment(
            assignment=d["assignment"],
            per_split_species_counts=d["per_split_species_counts"],
            cv={
                k: (float(v) if v is not None else float("nan"))
                for k, v in d["cv_percent"].items()
            },
            objective=(
                float(d["objective"]) if d["objective"] is not None else math.inf
            ),
            infeasible_species=d.get("infeasible_species", []),
            fractions_ok=d.get("fractions_ok", True),
            exhaustive=d.get("exhaustive", False),
        )


def _species_candidates(n: int) -> list[tuple[int, ...]]:
    """Valid split-index tuples for one species with n specimens.

    Species with >=3 specimens must cover all three splits; 2 specimens go to
    train+test; a single specimen goes to train.
    """
    if n >= 3:
        return [
            a for a in itertools.product(range(3), repeat=n)
            if len(set(a)) == 3
        ]
    if n == 2:
        return [(0, 2), (2, 0)]
    return [(0,)]


def _evaluate(
    counts: np.ndarray,  # (n_species, 3) slice counts per split
    weights: tuple[float, float, float],
) -> float:
    totals = counts.sum(axis=0)
    if (totals <= 0).any():
        return math.inf
    means = counts.mean(axis=0)
    stds = counts.std(axis=0, ddof=1) if counts.shape[0] > 1 else np.zeros(3)
    cvs = 100.0 * stds / means
    return float(np.dot(weights, cvs))


def _fractions_ok(
    counts: np.ndarray, targets: tuple[float, float, float], tol: float
) -> bool:
    totals = counts.sum(axis=0)
    grand = totals.sum()
    if grand <= 0:
        return False
    fracs = totals / grand
    return bool(np.all(np.abs(fracs - np.asarray(targets)) <= tol))


def split_specimens(
    stats: list[SpecimenStats],
    targets: tuple[float, float, float] = (0.4, 0.13, 0.47),
    budget: int = 200_000,
    seed: int = 0,
    weights: tuple[float, float, float] = (1.0, 1.0, 1.0),
    fraction_tolerance: float = 0.10,
    restarts: int = 24,
) -> SplitAssignment:
    if not stats:
        raise ValueError("no specimens")
    if abs(sum(targets) - 1.0) > 1e-9:
        raise ValueError("targets must sum to 1")

    species_order: list[str] = []
    groups: dict[str, list[SpecimenStats]] = {}
    for s in stats:
        if s.species not in groups:
            groups[s.species] = []
            species_order.append(s.species)
        groups[s.species].append(s)

    infeasible = [sp for sp in species_order if len(groups[sp]) < 3]
    cands = {sp: _species_candidates(len(groups[sp])) for sp in species_order}
    count_vectors = {
        sp: np.array([m.usable_slice_count for m in groups[sp]], dtype=np.float64)
        for sp in species_order
    }

    def split_counts(assign_by_species: dict[str, tuple[int, ...]]) -> np.ndarray:
        counts = np.zeros((len(species_order), 3))
        for i, sp in enumerate(species_order):
            a = np.asarray(assign_by_species[sp])
            v = count_vectors[sp]
            for k in range(3):
                counts[i, k] = v[a == k].sum()
        return counts

    def key(assign_by_species) -> tuple:
        # (fraction infeasibility, objective, lexicographic assignment)
        counts = split_counts(assign_by_species)
        obj = _evaluate(counts, weights)
        ok = _fractions_ok(counts, targets, fraction_tolerance)
        lex = tuple(assign_by_species[sp] for sp in species_order)
        return (0 if ok else 1, obj, lex)

    total_combos = 1
    for sp in species_order:
        total_combos *= len(cands[sp])
        if total_combos > budget:
            break

    best: dict[str, tuple[int, ...]] | None = None
    best_key: tuple | None = None
    exhaustive = total_combos <= budget

    if exhaustive:
        for combo in itertools.product(*(cands[sp] for sp in species_order)):
            assign = dict(zip(species_order, combo))
            k = key(assign)
            if best_key is None or k < best_key:
                best, best_key = assign, k
    else:
        rng = np.random.default_rng(seed)
        for _ in range(restarts):
            assign = {
                sp: cands[sp][int(rng.integers(len(cands[sp])))]
                for sp in species_order
            }
            cur_key = key(assign)
            improved = True
            while improved:
                improved = False
                for sp in species_order:
                    if len(cands[sp]) == 1:
                        continue
                    current = assign[sp]
                    for alt in _neighbors(current, cands[sp]):
                        trial = dict(assign)
                        trial[sp] = alt
                        k = key(trial)
                        if k < cur_key:
                            assign, cur_key = trial, k
                            improved = True
                            break
            if best_key is None or cur_key < best_key:
                best, best_key = assign, cur_key

    counts = split_counts(best)
    per_split: dict[str, dict[str, int]] = {s: {} for s in SPLITS}
    assignment: dict[str, str] = {}
    for i, sp in enumerate(species_order):
        for m, a in zip(groups[sp], best[sp]):
            assignment[m.specimen_id] = SPLITS[a]
        for k, split in enumerate(SPLITS):
            per_split[split][sp] = int(counts[i, k])
    cv = {}
    for k, split in enumerate(SPLITS):
        col = counts[:, k]
        cv[split] = (
            coefficient_of_variation(col) if col.sum() > 0 else float("nan")
        )
    return SplitAssignment(
        assignment=assignment,
        per_split_species_counts=per_split,
        cv=cv,
        objective=best_key[1],
        infeasible_species=infeasible,
        fractions_ok=best_key[0] == 0,
        exhaustive=exhaustive,
    )


def _neighbors(current: tuple[int, ...], valid: list[tuple[int, ...]]):
    """Single-specimen reassignments of `current` that remain valid."""
    valid_set = set(valid)
    for i in range(len(current)):
        for k in range(3):
            if k == current[i]:
                continue
            alt = current[:i] + (k,) + current[i + 1 :]
            if alt in valid_set:
                yield alt


# --- augmentation kernels ---

@dataclass(frozen=True)
class AugmentParams:
    rotation_range: float = 45.0  # degrees, symmetric
    scale_range: tuple[float, float] = (0.8, 1.2)
    hflip: bool = True
    brightness_delta: float = 0.1
    contrast_range: tuple[float, float] = (0.9, 1.1)


def _snap(x: float) -> float:
    # exact trig at right angles so 90-degree rotations are pure permutations
    for v in (-1.0, 0.0, 1.0):
        if abs(x - v) < 1e-12:
            return v
    return x


def apply_geometric(
    image: SliceImage, angle_deg: float = 0.0, scale: float = 1.0, hflip: bool = False
) -> SliceImage:
    """Rotate by angle_deg about the image center, scale about the center,
    then optionally flip horizontally. Bilinear resampling, zero fill."""
    h, w = image.pixels.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    rr, cc = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    if hflip:
        cc = (w - 1) - cc
    y = rr - cy
    x = cc - cx
    theta = math.radians(angle_deg)
    cos, sin = _snap(math.cos(theta)), _snap(math.sin(theta))
    # inverse rotation then inverse scale
    xs = (cos * x + sin * y) / scale
    ys = (-sin * x + cos * y) / scale
    out = resample_bilinear_grid(image.pixels, ys + cy, xs + cx, fill=0.0)
    return SliceImage(
        pixels=np.clip(out, 0.0, 1.0).astype(np.float32),
        provenance=image.provenance,
    )


def augment_geometric(
    image: SliceImage, params: AugmentParams, rng: np.random.Generator
) -> SliceImage:
    angle = float(rng.uniform(-params.rotation_range, params.rotation_range))
    scale = float(rng.uniform(*params.scale_range))
    flip = bool(params.hflip and rng.random() < 0.5)
    return apply_geometric(image, angle_deg=angle, scale=scale, hflip=flip)


def mixup(
    image_a: SliceImage, label_a: np.ndarray,
    image_b: SliceImage, label_b: np.ndarray,
    lam: float,
) -> tuple[SliceImage, np.ndarray]:
    if image_a.pixels.shape != image_b.pixels.shape:
        raise ShapeMismatch("mixup inputs must have the same shape")
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must be in [0, 1]")
    pixels = lam * image_a.pixels + (1.0 - lam) * image_b.pixels
    label = lam * np.asarray(label_a, dtype=np.float64) + (1.0 - lam) * np.asarray(
        label_b, dtype=np.float64
    )
    return SliceImage(pixels=pixels.astype(np.float32)), label


def cutmix(
    image_a: SliceImage, label_a: np.ndarray,
    image_b: SliceImage, label_b: np.ndarray,
    lam: float, rng: np.random.Generator,
) -> tuple[SliceImage, np.ndarray]:
    """Paste a rectangle of area ratio (1-lam) from b into a; label weights
    are the exact realized area fractions."""
    if image_a.pixels.shape != image_b.pixels.shape:
        raise ShapeMismatch("cutmix inputs must have the same shape")
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must be in [0, 1]")
    h, w = image_a.pixels.shape
    side = math.sqrt(1.0 - lam)
    ph = int(round(h * side))
    pw = int(round(w * side))
    out = image_a.pixels.copy()
    if ph > 0 and pw > 0:
        top = int(rng.integers(0, h - ph + 1))
        left = int(rng.integers(0, w - pw + 1))
        out[top : top + ph, left : left + pw] = image_b.pixels[
            top : top + ph, left : left + pw
        ]
    realized = (ph * pw) / (h * w)
    label = (1.0 - realized) * np.asarray(label_a, dtype=np.float64) + (
        realized * np.asarray(label_b, dtype=np.float64)
    )
    return SliceImage(pixels=out), label
