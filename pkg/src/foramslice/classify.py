"""Classifier providers and ensemble combiners.

A provider maps a preprocessed slice to a probability vector over the ordered
species label set. Three providers are built in: a precomputed-predictions
file, an external process speaking a one-line JSON contract, and a
self-contained nearest-Hu-moment baseline. The patch-ensemble combiner starts
from a primary provider and switches (or blends) to a specialist when a rule
fires: predicted class in the rule's trigger set, or primary confidence below
the rule's floor. Rules evaluate in config order; first match wins.
"""
from __future__ import annotations

import base64
import json
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ContractViolation, MissingProvider, ProviderUnavailable
from .image_metrics import hu_moments
from .preprocess import PreprocessParams, segment_foreground
from .volume_io import SliceImage

PROB_TOLERANCE = 1e-6


@dataclass
class ClassProbabilities:
    probs: np.ndarray
    provider_id: str

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        validate_probs(self.probs)

    def argmax(self) -> int:
        return int(np.argmax(self.probs))


def validate_probs(probs: np.ndarray, n_classes: Optional[int] = None) -> None:
    if probs.ndim != 1:
        raise ContractViolation("probability vector must be 1-D")
    if n_classes is not None and len(probs) != n_classes:
        raise ContractViolation(
            f"expected {n_classes} classes, got {len(probs)}"
        )
    if (probs < 0).any():
        raise ContractViolation("negative probability")
    if abs(float(probs.sum()) - 1.0) > PROB_TOLERANCE:
        raise ContractViolation(f"probabilities sum to {probs.sum():.8f}")


class PrecomputedProvider:
    """Predictions loaded from a `slice_id<TAB>p1..pN` TSV, keyed by slice id."""

    def __init__(self, path, labels: Sequence[str], provider_id: str = "precomputed"):
        self.provider_id = provider_id
        self.labels = list(labels)
        self.table: dict[str, np.ndarray] = {}
        for line in Path(path).read_text().splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            vec = np.array([float(x) for x in parts[1:]], dtype=np.float64)
            validate_probs(vec, len(self.labels))
            self.table[parts[0]] = vec

    def predict(self, image: SliceImage, slice_id: Optional[str] = None) -> ClassProbabilities:
        if slice_id is None or slice_id not in self.table:
            raise ProviderUnavailable(f"no precomputed prediction for {slice_id!r}")
        return ClassProbabilities(self.table[slice_id], self.provider_id)


class ExternalProcessProvider:
    """One JSON request on stdin, one JSON response `{"probs": [...]}` on stdout."""

    def __init__(
        self,
        command: list[str],
        labels: Sequence[str],
        provider_id: str = "external",
        timeout: float = 30.0,
    ):
        self.command = command
        self.labels = list(labels)
        self.provider_id = provider_id
        self.timeout = timeout

    def predict(self, image: SliceImage, slice_id: Optional[str] = None) -> ClassProbabilities:
        request = json.dumps(
            {
                "slice_id": slice_id,
                "pixels": base64.b64encode(
                    image.pixels.astype(np.float32).tobytes()
                ).decode(),
                "size": [image.height, image.width],
            }
        )
        try:
            proc = subprocess.run(
                self.command,
                input=request.encode(),
                capture_output=True,
                timeout=self.timeout,
            )
        except (OSError, subprocess.TimeoutExpired) as e:
            raise ProviderUnavailable(str(e)) from e
        if proc.returncode != 0:
            raise ProviderUnavailable(
                f"provider exited {proc.returncode}: {proc.stderr[:200]!r}"
            )
        try:
            response = json.loads(proc.stdout.decode())
            vec = np.asarray(response["probs"], dtype=np.float64)
        except (ValueError, KeyError) as e:
            raise ContractViolation(f"malformed provider response: {e}") from e
        validate_probs(vec, len(self.labels))
        return ClassProbabilities(vec, self.provider_id)


class HuNearestProvider:
    """Baseline: softmax over negated per-class nearest Hu-vector distances.

    Self-contained (no external ML runtime); not expected to rival a CNN.
    """

    def __init__(
        self,
        hu_vectors: np.ndarray,
        species: Sequence[str],
        labels: Sequence[str],
        provider_id: str = "hu-nearest",
        pre_params: PreprocessParams = PreprocessParams(),
        temperature: float = 1.0,
    ):
        self.provider_id = provider_id
        self.labels = list(labels)
        self.hu = np.asarray(hu_vectors, dtype=np.float64)
        self.species = np.asarray(species)
        self.pre_params = pre_params
        self.temperature = temperature

    @classmethod
    def from_corpus_index(cls, index, labels: Optional[Sequence[str]] = None, **kw):
        labels = list(labels) if labels else sorted(set(index.species.tolist()))
        return cls(index.hu, index.species, labels, **kw)

    def hu_of(self, image: SliceImage) -> np.ndarray:
        mask = segment_foreground(image, self.pre_params)
        return hu_moments(mask)

    def predict(self, image: SliceImage, slice_id: Optional[str] = None) -> ClassProbabilities:
        q = self.hu_of(image)
        dists = np.abs(self.hu - q[None, :]).sum(axis=1)
        per_class = np.array(
            [
                dists[self.species == label].min()
                if (self.species == label).any()
                else np.inf
                for label in self.labels
            ]
        )
        logits = -per_class / self.temperature
        logits -= logits.max()
        p = np.exp(logits)
        p /= p.sum()
        return ClassProbabilities(p, self.provider_id)


@dataclass(frozen=True)
class PatchRule:
    trigger_classes: frozenset[str]
    specialist_provider_id: str
    confidence_floor: float = 0.0
    blend: float = 1.0  # 1 = full switch to the specialist

    def fires(self, primary: ClassProbabilities, labels: Sequence[str]) -> bool:
        predicted = labels[primary.argmax()]
        return (
            predicted in self.trigger_classes
            or float(primary.probs.max()) < self.confidence_floor
        )


@dataclass
class EnsembleConfig:
    labels: list[str]
    primary_provider_id: str
    rules: list[PatchRule] = field(default_factory=list)
    fallback: str = "primary"  # "primary" | "majority"

    @staticmethod
    def from_json(text: str) -> "EnsembleConfig":
        d = json.loads(text)
        rules = [
            PatchRule(
                trigger_classes=frozenset(r.get("trigger_classes", [])),
                specialist_provider_id=r["specialist_provider_id"],
                confidence_floor=float(r.get("confidence_floor", 0.0)),
                blend=float(r.get("blend", 1.0)),
            )
            for r in d.get("rules", [])
        ]
        return EnsembleConfig(
            labels=list(d["labels"]),
            primary_provider_id=d["primary_provider_id"],
            rules=rules,
            fallback=d.get("fallback", "primary"),
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "labels": self.labels,
                "primary_provider_id": self.primary_provider_id,
                "fallback": self.fallback,
                "rules": [
                    {
                        "trigger_classes": sorted(r.trigger_classes),
                        "specialist_provider_id": r.specialist_provider_id,
                        "confidence_floor": r.confidence_floor,
                        "blend": r.blend,
                    }
                    for r in self.rules
                ],
            },
            indent=2,
        )


def combine_patch_ensemble(
    predictions: dict[str, ClassProbabilities], config: EnsembleConfig
) -> ClassProbabilities:
    """Confidence-switching combiner; identity on the primary vector when no
    rule fires."""
    if config.primary_provider_id not in predictions:
        raise MissingProvider(config.primary_provider_id)
    primary = predictions[config.primary_provider_id]
    unknown = frozenset().union(*(r.trigger_classes for r in config.rules)) if config.rules else frozenset()
    if not unknown <= frozenset(config.labels):
        raise ValueError("trigger classes must be a subset of the label set")
    for rule in config.rules:
        if not rule.fires(primary, config.labels):
            continue
        if rule.specialist_provider_id not in predictions:
            raise MissingProvider(rule.specialist_provider_id)
        specialist = predictions[rule.specialist_provider_id]
        blended = rule.blend * specialist.probs + (1.0 - rule.blend) * primary.probs
        blended = blended / blended.sum()
        return ClassProbabilities(blended, provider_id="patch-ensemble")
    return primary


@dataclass
class MajorityVote:
    probs: ClassProbabilities
    winner: str
    votes: int


def combine_majority(
    predictions: Sequence[ClassProbabilities], labels: Sequence[str]
) -> MajorityVote:
    """Plurality over argmaxes; ties break toward the tied class with the
    highest mean probability. The returned vector is the provider mean."""
    if len(predictions) < 2:
        raise ValueError("majority voting needs at least 2 providers")
    stack = np.stack([p.probs for p in predictions])
    mean = stack.mean(axis=0)
    votes = np.zeros(len(labels), dtype=np.int64)
    for p in predictions:
        votes[p.argmax()] += 1
    top_votes = votes.max()
    tied = np.nonzero(votes == top_votes)[0]
    winner_idx = int(tied[np.argmax(mean[tied])])
    return MajorityVote(
        probs=ClassProbabilities(mean / mean.sum(), provider_id="majority"),
        winner=labels[winner_idx],
        votes=int(top_votes),
    )


def top_k(
    probs: ClassProbabilities, k: int, labels: Sequence[str]
) -> list[tuple[str, float]]:
    """Top-k (label, confidence), descending; ties resolve in label order."""
    if not 1 <= k <= len(labels):
        raise ValueError(f"k must be in [1, {len(labels)}]")
    order = np.argsort(-probs.probs, kind="stable")[:k]
    return [(labels[i], float(probs.probs[i])) for i in order]
