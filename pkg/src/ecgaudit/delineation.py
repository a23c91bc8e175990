"""Soft 24-class segmentation maps, R-peak detection, segmenter evaluation.

The default segmenter is an oracle that converts ground-truth annotations
into soft maps (one-hot plus triangular temporal smoothing). A learned
segmenter can be plugged in through the `Segmenter` protocol; everything
downstream only consumes `SegmentationMap`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from ecgaudit.synth.schema import (
    LEADS, LEAD_INDEX, SEGMENT_CLASSES, SEGMENT_INDEX, N_SEGMENT_CLASSES,
)

R_PEAK_CLASS = SEGMENT_INDEX["r_peak"]
DETECTION_LEADS = tuple(LEAD_INDEX[l] for l in ("V1", "V2", "V3", "V4"))
MIN_PEAK_DISTANCE = 30   # samples
MIN_PEAK_PROBABILITY = 0.25


@dataclass
class SegmentationMap:
    """Per-timestep soft assignment over the 24 segment classes."""

    probs: np.ndarray  # (T, 12, 24)

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 3 or self.probs.shape[2] != N_SEGMENT_CLASSES:
            raise ValueError(f"probs must be (T, 12, 24), got {self.probs.shape}")
        if np.any(self.probs < 0.0):
            raise ValueError("probabilities must be non-negative")
        sums = self.probs.sum(axis=2)
        if np.max(np.abs(sums - 1.0)) > 1e-6:
            raise ValueError("each (t, lead) slice must sum to 1")

    def argmax_classes(self) -> np.ndarray:
        return self.probs.argmax(axis=2).astype(np.uint8)


class Segmenter(Protocol):
    """Anything that maps a record to a soft segmentation."""

    def segment(self, record) -> SegmentationMap: ...


def _triangular_kernel(half_width: int) -> np.ndarray:
    w = np.arange(-half_width, half_width + 1, dtype=np.float64)
    k = half_width + 1 - np.abs(w)
    return k / k.sum()


def oracle_segment(record, softness: float = 3.0) -> SegmentationMap:
    """One-hot map from ground-truth annotations, temporally smoothed.

    `softness` is the half-width (samples) of a normalized triangular
    kernel; 0 returns the exact one-hot map. Rows are renormalized to the
    simplex (edge effects of the padding).
    """
    if record.annotation is None:
        raise ValueError(f"record {record.id}: missing annotation")
    return soft_map_from_annotation(record.annotation, softness)


def soft_map_from_annotation(annotation: np.ndarray, softness: float = 3.0) -> SegmentationMap:
    annotation = np.asarray(annotation)
    t, n_leads = annotation.shape
    onehot = np.zeros((t, n_leads, N_SEGMENT_CLASSES))
    rows = np.arange(t)[:, None]
    cols = np.arange(n_leads)[None, :]
    onehot[rows, cols, annotation] = 1.0
    half = int(round(softness))
    if half <= 0:
        return SegmentationMap(onehot)
    kernel = _triangular_kernel(half)
    smoothed = np.empty_like(onehot)
    flat = onehot.reshape(t, -1)
    padded = np.pad(flat, ((half, half), (0, 0)))
    out = np.zeros_like(flat)
    for i, kv in enumerate(kernel):
        out += kv * padded[i : i + t]
    smoothed = out.reshape(onehot.shape)
    totals = smoothed.sum(axis=2, keepdims=True)
    return SegmentationMap(smoothed / totals)


class OracleSegmenter:
    """Default `Segmenter`: ground-truth annotations, softened."""

    def __init__(self, softness: float = 3.0):
        self.softness = softness

    def segment(self, record) -> SegmentationMap:
        return oracle_segment(record, self.softness)


@dataclass
class RPeakList:
    indices: np.ndarray  # ascending sample indices

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=int)
        if len(self.indices) > 1:
            gaps = np.diff(self.indices)
            if np.any(gaps <= 0):
                raise ValueError("R-peak indices must be strictly increasing")
            if np.any(gaps < MIN_PEAK_DISTANCE):
                raise ValueError(f"consecutive R-peaks closer than {MIN_PEAK_DISTANCE}")

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)


def _local_maxima(score: np.ndarray) -> np.ndarray:
    """Strictly-greater-than-both-neighbors maxima; plateaus keep the
    leftmost index. Signal edges count as -inf neighbors."""
    t = len(score)
    out = []
    i = 0
    while i < t:
        j = i
        while j + 1 < t and score[j + 1] == score[i]:
            j += 1
        left = score[i - 1] if i > 0 else -np.inf
        right = score[j + 1] if j + 1 < t else -np.inf
        if score[i] > left and score[i] > right:
            out.append(i)
        i = j + 1
    return np.asarray(out, dtype=int)


def detect_r_peaks(segmap: SegmentationMap,
                   min_distance: int = MIN_PEAK_DISTANCE,
                   min_probability: float = MIN_PEAK_PROBABILITY) -> RPeakList:
    """Peaks of the R-peak class probability, spatial max over V1-V4.

    Local maxima with score >= `min_probability` are kept greedily in
    descending score order subject to the minimum distance.
    """
    score = segmap.probs[:, DETECTION_LEADS, R_PEAK_CLASS].max(axis=1)
    candidates = _local_maxima(score)
    candidates = candidates[score[candidates] >= min_probability]
    # stable order: by descending score, ties by position
    order = np.lexsort((candidates, -score[candidates]))
    kept: list[int] = []
    for idx in candidates[order]:
        if all(abs(idx - k) >= min_distance for k in kept):
            kept.append(int(idx))
    return RPeakList(np.sort(kept))


@dataclass
class SegmenterReport:
    accuracy: float
    macro_auc: float
    per_class: dict[str, dict[str, float]]  # precision/recall/f1/support/auc
    confusion: np.ndarray                   # (24, 24), rows = truth
    absent_classes: list[str]

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_auc": self.macro_auc,
            "per_class": self.per_class,
            "confusion": self.confusion.tolist(),
            "absent_classes": self.absent_classes,
        }


def evaluate_segmenter(pred: SegmentationMap, truth: np.ndarray) -> SegmenterReport:
    """Hard metrics on the argmax, soft one-vs-rest AUC on probabilities.

    Classes absent from the truth are excluded from macro averages and
    listed in `absent_classes`.
    """
    from ecgaudit.nn.metrics import auc_score

    truth = np.asarray(truth)
    if pred.probs.shape[:2] != truth.shape:
        raise ValueError(
            f"prediction shape {pred.probs.shape[:2]} does not match truth "
            f"{truth.shape}")
    hard = pred.argmax_classes().reshape(-1)
    flat_truth = truth.reshape(-1)
    flat_probs = pred.probs.reshape(-1, N_SEGMENT_CLASSES)
    accuracy = float(np.mean(hard == flat_truth))
    confusion = np.zeros((N_SEGMENT_CLASSES, N_SEGMENT_CLASSES), dtype=int)
    np.add.at(confusion, (flat_truth, hard), 1)

    per_class: dict[str, dict[str, float]] = {}
    absent: list[str] = []
    aucs = []
    for cid, name in enumerate(SEGMENT_CLASSES):
        support = int((flat_truth == cid).sum())
        if support == 0:
            absent.append(name)
            continue
        tp = int(confusion[cid, cid])
        fp = int(confusion[:, cid].sum() - tp)
        fn = int(confusion[cid, :].sum() - tp)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        entry = {"precision": precision, "recall": recall, "f1": f1,
                 "support": support}
        try:
            entry["auc"] = auc_score(flat_probs[:, cid], flat_truth == cid)
            aucs.append(entry["auc"])
        except ValueError:
            entry["auc"] = float("nan")
        per_class[name] = entry
    macro_auc = float(np.mean(aucs)) if aucs else float("nan")
    return SegmenterReport(accuracy=accuracy, macro_auc=macro_auc,
                           per_class=per_class, confusion=confusion,
                           absent_classes=absent)


def save_soft_map(segmap: SegmentationMap, path, record_id: str | None = None) -> None:
    """Soft map on disk: little-endian float32 (T, 12, 24) row-major + sidecar."""
    import json
    from pathlib import Path

    path = Path(path)
    path.write_bytes(segmap.probs.astype("<f4").tobytes())
    sidecar = {"shape": list(segmap.probs.shape), "record_id": record_id,
               "classes": list(SEGMENT_CLASSES)}
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def save_r_peaks(peaks_by_record: dict[str, RPeakList], path) -> None:
    """R-peak lists as CSV (record_id, index)."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["record_id", "index"])
        for rec_id in sorted(peaks_by_record):
            for idx in peaks_by_record[rec_id]:
                writer.writerow([rec_id, int(idx)])
