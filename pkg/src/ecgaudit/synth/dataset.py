"""Dataset container and on-disk format.

A dataset directory holds:

    manifest.json      record ids, lengths, labels, age, sex, split, rate
    signals.bin        concatenated little-endian float32, T x 12 row-major
    annotations.bin    one uint8 class id per timestep per lead (optional)
    features.csv       one row per record, columns = FEATURE_FIELDS

Splits are stratified by label (80/10/10 per class).
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ecgaudit.nn.training import TrainData
from ecgaudit.synth.schema import LEADS, SAMPLE_RATE


@dataclass
class EcgRecord:
    """One 12-lead record at 100 Hz, in millivolts."""

    id: str
    signal: np.ndarray                 # (T, 12)
    labels: set[str]
    age: float
    sex: str                           # "female" | "male"
    annotation: np.ndarray | None = None  # (T, 12) uint8 class ids

    def __post_init__(self):
        self.signal = np.asarray(self.signal, dtype=np.float64)
        if self.signal.ndim != 2 or self.signal.shape[1] != len(LEADS):
            raise ValueError(f"signal must be (T, 12), got {self.signal.shape}")
        if self.signal.shape[0] < 250:
            raise ValueError("records must be at least 250 samples long")
        if not np.all(np.isfinite(self.signal)):
            raise ValueError("signal contains non-finite samples")
        if self.sex not in ("female", "male"):
            raise ValueError(f"sex must be female or male, got {self.sex!r}")
        self.labels = set(self.labels)
        if self.annotation is not None:
            self.annotation = np.asarray(self.annotation, dtype=np.uint8)
            if self.annotation.shape != self.signal.shape:
                raise ValueError("annotation shape must match signal shape")

    @property
    def length(self) -> int:
        return self.signal.shape[0]


def assign_splits(records: list[EcgRecord], rng: np.random.Generator,
                  fractions: tuple[float, float] = (0.8, 0.1)) -> dict[str, str]:
    """Stratified per-label 80/10/10 split assignment."""
    by_label: dict[str, list[str]] = {}
    for rec in records:
        key = "|".join(sorted(rec.labels))
        by_label.setdefault(key, []).append(rec.id)
    splits: dict[str, str] = {}
    for key in sorted(by_label):
        ids = sorted(by_label[key])
        rng.shuffle(ids)
        n = len(ids)
        n_train = int(round(fractions[0] * n))
        n_valid = int(round(fractions[1] * n))
        for i, rid in enumerate(ids):
            splits[rid] = ("train" if i < n_train
                           else "valid" if i < n_train + n_valid else "test")
    return splits


@dataclass
class EcgDataset:
    records: list[EcgRecord]
    splits: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate record ids")
        self._by_id = {r.id: r for r in self.records}

    def __len__(self) -> int:
        return len(self.records)

    def get(self, rec_id: str) -> EcgRecord:
        return self._by_id[rec_id]

    def split(self, name: str) -> list[EcgRecord]:
        return [r for r in self.records if self.splits.get(r.id) == name]

    def with_label(self, label: str) -> list[EcgRecord]:
        return [r for r in self.records if label in r.labels]

    def label_names(self) -> list[str]:
        names: set[str] = set()
        for r in self.records:
            names |= r.labels
        return sorted(names)


def training_data(dataset: EcgDataset, classes: list[str] | None = None,
                  split: str | None = "train") -> tuple[TrainData, list[str]]:
    """Multi-hot classification arrays for a split (None = all records)."""
    classes = list(classes) if classes else dataset.label_names()
    records = dataset.split(split) if split else dataset.records
    if not records:
        raise ValueError(f"no records in split {split!r}")
    x = np.stack([r.signal for r in records])
    y = np.zeros((len(records), len(classes)))
    for i, rec in enumerate(records):
        for j, cls in enumerate(classes):
            if cls in rec.labels:
                y[i, j] = 1.0
    return TrainData(x, y), classes


# -- on-disk format -----------------------------------------------------


def save_dataset(dataset: EcgDataset, directory: str | Path,
                 features: bool = True) -> Path:
    from ecgaudit.synth.features import extract_features, FEATURE_FIELDS

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    has_annotations = all(r.annotation is not None for r in dataset.records)
    entries = []
    sig_buf = io.BytesIO()
    ann_buf = io.BytesIO()
    for rec in dataset.records:
        entries.append({
            "id": rec.id,
            "length": rec.length,
            "labels": sorted(rec.labels),
            "age": rec.age,
            "sex": rec.sex,
            "split": dataset.splits.get(rec.id, "train"),
        })
        sig_buf.write(rec.signal.astype("<f4").tobytes())
        if has_annotations:
            ann_buf.write(rec.annotation.tobytes())
    manifest = {
        "sample_rate": SAMPLE_RATE,
        "leads": list(LEADS),
        "has_annotations": has_annotations,
        "records": entries,
    }
    (directory / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    (directory / "signals.bin").write_bytes(sig_buf.getvalue())
    if has_annotations:
        (directory / "annotations.bin").write_bytes(ann_buf.getvalue())
    if features and has_annotations:
        with open(directory / "features.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id"] + list(FEATURE_FIELDS))
            for rec in dataset.records:
                feats = extract_features(rec)
                writer.writerow([rec.id] + [repr(feats.values[f])
                                            for f in FEATURE_FIELDS])
    return directory


def load_dataset(directory: str | Path) -> EcgDataset:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    sig_raw = (directory / "signals.bin").read_bytes()
    has_ann = manifest["has_annotations"]
    ann_raw = (directory / "annotations.bin").read_bytes() if has_ann else b""
    n_leads = len(manifest["leads"])
    records = []
    splits = {}
    sig_off = 0
    ann_off = 0
    for entry in manifest["records"]:
        t = entry["length"]
        count = t * n_leads
        sig = np.frombuffer(sig_raw, dtype="<f4", count=count,
                            offset=sig_off).reshape(t, n_leads).astype(np.float64)
        sig_off += count * 4
        ann = None
        if has_ann:
            ann = np.frombuffer(ann_raw, dtype=np.uint8, count=count,
                                offset=ann_off).reshape(t, n_leads).copy()
            ann_off += count
        records.append(EcgRecord(id=entry["id"], signal=sig,
                                 labels=set(entry["labels"]), age=entry["age"],
                                 sex=entry["sex"], annotation=ann))
        splits[entry["id"]] = entry["split"]
    return EcgDataset(records=records, splits=splits)


# -- lead cross-correlation ---------------------------------------------


@dataclass
class CrossCorrelationReport:
    matrix: np.ndarray                  # (12, 12) Pearson correlations
    offdiagonal_sums: np.ndarray        # per-lead sum of |off-diagonal| entries
    degenerate_leads: list[str]         # zero-variance leads reported as 0

    def to_dict(self) -> dict:
        return {
            "leads": list(LEADS),
            "matrix": self.matrix.tolist(),
            "offdiagonal_sums": self.offdiagonal_sums.tolist(),
            "degenerate_leads": self.degenerate_leads,
        }


def lead_cross_correlation(dataset: EcgDataset) -> CrossCorrelationReport:
    """Pearson correlation between leads over all concatenated records."""
    if len(dataset) < 2:
        raise ValueError("need at least 2 records")
    x = np.concatenate([r.signal for r in dataset.records], axis=0)
    x = x - x.mean(axis=0)
    std = x.std(axis=0)
    degenerate = [LEADS[i] for i in np.flatnonzero(std == 0.0)]
    safe = np.where(std == 0.0, 1.0, std)
    xn = x / safe
    corr = (xn.T @ xn) / len(x)
    for i in np.flatnonzero(std == 0.0):
        corr[i, :] = 0.0
        corr[:, i] = 0.0
    np.fill_diagonal(corr, np.where(std == 0.0, 0.0, 1.0))
    off = np.abs(corr).sum(axis=1) - np.abs(np.diag(corr))
    return CrossCorrelationReport(matrix=corr, offdiagonal_sums=off,
                                  degenerate_leads=degenerate)
