"""Multiclass evaluation: confusion matrix, precision/recall/F1, top-k
accuracy and one-vs-rest AUC via the Mann-Whitney rank statistic.

Tie conventions are deterministic everywhere: argmax and top-k ties resolve
in label order; a never-predicted class gets precision 0 with a flag.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EmptyInput


@dataclass(frozen=True)
class EvalRecord:
    slice_id: str
    true_label: str
    probs: np.ndarray  # over the ordered label set


@dataclass
class PerClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int
    precision_defined: bool = True


@dataclass
class EvalReport:
    labels: list[str]
    accuracy: float
    top3_accuracy: float
    per_class: dict[str, PerClassMetrics]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    per_class_auc: dict[str, float]
    macro_auc: float
    micro_auc: float
    degenerate_auc_classes: list[str] = field(default_factory=list)
    confusion: np.ndarray = None

    def to_dict(self) -> dict:
        rows = {}
        for label in sorted(self.labels):
            m = self.per_class[label]
            rows[label] = {
                "precision": m.precision,
                "recall": m.recall,
                "f1": m.f1,
                "support": m.support,
                "precision_defined": m.precision_defined,
                "auc": self.per_class_auc.get(label),
            }
        return {
            "accuracy": self.accuracy,
            "top3_accuracy": self.top3_accuracy,
            "macro": {
                "precision": self.macro_precision,
                "recall": self.macro_recall,
                "f1": self.macro_f1,
                "auc_macro": self.macro_auc,
                "auc_micro": self.micro_auc,
            },
            "per_class": rows,
            "degenerate_auc_classes": self.degenerate_auc_classes,
            "confusion": self.confusion.tolist(),
            "labels": self.labels,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_markdown(self) -> str:
        lines = [
            "| Species | Precision | Recall | F1 | AUC |",
            "|---|---|---|---|---|",
        ]
        for label in sorted(self.labels):
            m = self.per_class[label]
            auc = self.per_class_auc.get(label)
            auc_s = f"{auc:.3f}" if auc is not None else "n/a"
            lines.append(
                f"| {label} | {m.precision:.3f} | {m.recall:.3f} "
                f"| {m.f1:.3f} | {auc_s} |"
            )
        lines.append(
            f"| **Average** | {self.macro_precision:.3f} | {self.macro_recall:.3f} "
            f"| {self.macro_f1:.3f} | {self.macro_auc:.3f} |"
        )
        lines.append("")
        lines.append(
            f"Accuracy {self.accuracy:.4f}; top-3 accuracy {self.top3_accuracy:.4f}; "
            f"micro AUC {self.micro_auc:.4f}"
        )
        return "\n".join(lines)


def _argmax_label_order(probs: np.ndarray) -> int:
    # np.argmax returns the lowest index on ties = label order
    return int(np.argmax(probs))


def confusion_matrix(
    records: Sequence[EvalRecord], labels: Sequence[str]
) -> np.ndarray:
    if not records:
        raise EmptyInput("no records")
    idx = {l: i for i, l in enumerate(labels)}
    n = len(labels)
    cm = np.zeros((n, n), dtype=np.int64)
    for r in records:
        cm[idx[r.true_label], _argmax_label_order(np.asarray(r.probs))] += 1
    return cm


def precision_recall_f1(
    confusion: np.ndarray, labels: Sequence[str]
) -> tuple[dict[str, PerClassMetrics], float, float, float]:
    per_class = {}
    precs, recs, f1s = [], [], []
    for i, label in enumerate(labels):
        tp = float(confusion[i, i])
        fp = float(confusion[:, i].sum() - tp)
        fn = float(confusion[i, :].sum() - tp)
        predicted = tp + fp
        if predicted > 0:
            precision = tp / predicted
            defined = True
        else:
            precision = 0.0
            defined = False
        recall = tp / (tp + fn) if (tp + fn) > 0 else 0.0
        f1 = (
            2.0 * precision * recall / (precision + recall)
            if precision + recall > 0
            else 0.0
        )
        per_class[label] = PerClassMetrics(
            precision=precision, recall=recall, f1=f1,
            support=int(confusion[i, :].sum()), precision_defined=defined,
        )
        precs.append(precision)
        recs.append(recall)
        f1s.append(f1)
    return (
        per_class,
        float(np.mean(precs)),
        float(np.mean(recs)),
        float(np.mean(f1s)),
    )


def top_k_accuracy(
    records: Sequence[EvalRecord], labels: Sequence[str], k: int
) -> float:
    if not 1 <= k <= len(labels):
        raise ValueError(f"k must be in [1, {len(labels)}]")
    idx = {l: i for i, l in enumerate(labels)}
    hits = 0
    for r in records:
        p = np.asarray(r.probs)
        # stable sort on -p: ties resolve in label order
        top = np.argsort(-p, kind="stable")[:k]
        hits += int(idx[r.true_label] in top)
    return hits / len(records)


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the average rank."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        ranks[order[i : j + 1]] = avg
        i = j + 1
    return ranks


def _auc_from_scores(scores: np.ndarray, positives: np.ndarray) -> float:
    n_pos = int(positives.sum())
    n_neg = len(positives) - n_pos
    ranks = _average_ranks(scores)
    rank_sum = ranks[positives].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def roc_auc_ovr(
    records: Sequence[EvalRecord], labels: Sequence[str]
) -> tuple[dict[str, float], float, float, list[str]]:
    """Per-class one-vs-rest AUC, macro mean, micro (pooled) AUC and the
    list of degenerate classes excluded from the macro."""
    if not records:
        raise EmptyInput("no records")
    probs = np.stack([np.asarray(r.probs, dtype=np.float64) for r in records])
    trues = np.array([labels.index(r.true_label) for r in records])
    per_class: dict[str, float] = {}
    degenerate: list[str] = []
    pooled_scores, pooled_pos = [], []
    for i, label in enumerate(labels):
        positives = trues == i
        scores = probs[:, i]
        pooled_scores.append(scores)
        pooled_pos.append(positives)
        if positives.all() or not positives.any():
            degenerate.append(label)
            continue
        per_class[label] = _auc_from_scores(scores, positives)
    macro = float(np.mean(list(per_class.values()))) if per_class else float("nan")
    micro = _auc_from_scores(
        np.concatenate(pooled_scores), np.concatenate(pooled_pos)
    )
    return per_class, macro, micro, degenerate


def evaluate(records: Sequence[EvalRecord], labels: Sequence[str]) -> EvalReport:
    if not records:
        raise EmptyInput("no records")
    labels = list(labels)
    cm = confusion_matrix(records, labels)
    per_class, mp, mr, mf1 = precision_recall_f1(cm, labels)
    accuracy = float(np.trace(cm) / cm.sum())
    top3 = top_k_accuracy(records, labels, min(3, len(labels)))
    per_auc, macro_auc, micro_auc, degenerate = roc_auc_ovr(records, labels)
    return EvalReport(
        labels=labels,
        accuracy=accuracy,
        top3_accuracy=top3,
        per_class=per_class,
        macro_precision=mp,
        macro_recall=mr,
        macro_f1=mf1,
        per_class_auc=per_auc,
        macro_auc=macro_auc,
        micro_auc=micro_auc,
        degenerate_auc_classes=degenerate,
        confusion=cm,
    )


def load_predictions_tsv(path) -> dict[str, np.ndarray]:
    """`slice_id<TAB>p1..pN` rows -> slice_id -> probability vector."""
    out = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        out[parts[0]] = np.array([float(x) for x in parts[1:]], dtype=np.float64)
    return out


def load_labels_tsv(path) -> dict[str, str]:
    """`slice_id<TAB>label` rows."""
    out = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        slice_id, label = line.split("\t")
        out[slice_id] = label
    return out


def records_from_files(
    predictions: dict[str, np.ndarray], label_map: dict[str, str]
) -> list[EvalRecord]:
    records = []
    for slice_id in sorted(predictions):
        if slice_id not in label_map:
            continue
        records.append(
            EvalRecord(
                slice_id=slice_id,
                true_label=label_map[slice_id],
                probs=predictions[slice_id],
            )
        )
    if not records:
        raise EmptyInput("no overlapping slice ids between predictions and labels")
    return records
