"""Beat- and segment-aligned aggregation of attribution maps.

Per-sample attribution maps are cropped around detected R-peaks (300 ms
before to 500 ms after, i.e. an 80-sample window at 100 Hz), reduced to
per-sample median beats, then aggregated over a subgroup (the top
predictions for a class) by a second elementwise median. Segment tables
weight attributions with soft segmentation maps and normalize by each
segment's temporal mass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ecgaudit.attribution import attribute
from ecgaudit.delineation import OracleSegmenter, RPeakList, SegmentationMap, detect_r_peaks
from ecgaudit.nn.model import TrainedModel
from ecgaudit.nn.training import centered_crop
from ecgaudit.synth.dataset import EcgDataset, EcgRecord
from ecgaudit.synth.schema import LEADS, SEGMENT_CLASSES, N_SEGMENT_CLASSES

PRE_SAMPLES = 30    # 300 ms before the R-peak at 100 Hz
POST_SAMPLES = 50   # 500 ms after
BEAT_LENGTH = PRE_SAMPLES + POST_SAMPLES


@dataclass
class BeatStack:
    """Aligned crops (signal or attribution): (B, 80, C)."""

    beats: np.ndarray
    peak_indices: np.ndarray
    record_id: str | None = None

    def __post_init__(self):
        self.beats = np.asarray(self.beats, dtype=np.float64)
        if self.beats.ndim != 3 or self.beats.shape[1] != BEAT_LENGTH:
            raise ValueError(f"beats must be (B, {BEAT_LENGTH}, C)")
        if len(self.beats) < 1:
            raise ValueError("a beat stack needs at least one beat")

    def __len__(self) -> int:
        return len(self.beats)


def crop_beats(series: np.ndarray, peaks: RPeakList | np.ndarray,
               record_id: str | None = None) -> BeatStack:
    """Crop `series[p - 30 : p + 50]` per peak; out-of-bounds windows dropped."""
    series = np.asarray(series, dtype=np.float64)
    t = series.shape[0]
    indices = peaks.indices if isinstance(peaks, RPeakList) else np.asarray(peaks, int)
    kept = [p for p in indices if p - PRE_SAMPLES >= 0 and p + POST_SAMPLES <= t]
    if not kept:
        raise ValueError("no R-peak window fits inside the series")
    beats = np.stack([series[p - PRE_SAMPLES : p + POST_SAMPLES] for p in kept])
    return BeatStack(beats=beats, peak_indices=np.asarray(kept), record_id=record_id)


def median_beat(stack: BeatStack | np.ndarray) -> np.ndarray:
    """Elementwise median across beats -> (80, C)."""
    beats = stack.beats if isinstance(stack, BeatStack) else np.asarray(stack)
    return np.median(beats, axis=0)


def select_subgroup(model: TrainedModel, dataset: EcgDataset, class_k: int | str,
                    top_n: int = 100) -> list[str]:
    """Ids of the `top_n` highest predicted probabilities for a class.

    Ties break toward lexicographically smaller record ids.
    """
    k = resolve_class(model, class_k)
    records = dataset.records
    x = np.stack([centered_crop(r.signal, model.input_length) for r in records])
    probs = model.predict(x)[:, k]
    ranked = sorted(zip(records, probs), key=lambda rp: (-rp[1], rp[0].id))
    return [r.id for r, _ in ranked[:top_n]]


def resolve_class(model: TrainedModel, class_k: int | str) -> int:
    if isinstance(class_k, str):
        if class_k not in model.classes:
            raise KeyError(f"unknown class {class_k!r}; model has {model.classes}")
        return model.classes.index(class_k)
    if not 0 <= class_k < model.spec.output_dim:
        raise KeyError(f"class index {class_k} out of range")
    return int(class_k)


def segment_aggregate(attr: np.ndarray, segmap: SegmentationMap) -> np.ndarray:
    """(12, 24) per-segment average attribution.

    Entry (l, m) is the attribution of lead l averaged with the soft
    weights of segment m, i.e. sum_t attr[t,l] p[t,l,m] / sum_t p[t,l,m];
    segments with zero temporal mass are NaN.
    """
    attr = np.asarray(attr, dtype=np.float64)
    if attr.shape != segmap.probs.shape[:2]:
        raise ValueError(
            f"attribution shape {attr.shape} does not match segmentation "
            f"{segmap.probs.shape[:2]}")
    weighted = np.einsum("tl,tlm->lm", attr, segmap.probs)
    mass = segmap.probs.sum(axis=0)  # (12, 24)
    out = np.full((attr.shape[1], N_SEGMENT_CLASSES), np.nan)
    nonzero = mass > 0.0
    out[nonzero] = weighted[nonzero] / mass[nonzero]
    return out


@dataclass
class SampleAggregate:
    record_id: str
    signal_beat: np.ndarray       # (80, 12) median over the sample's beats
    attribution_beat: np.ndarray  # (80, 12), signed
    segment_table: np.ndarray     # (12, 24) on |attribution|, NaN = no mass
    prediction: np.ndarray        # per-class probabilities
    n_beats: int


def beat_aligned_sample(model: TrainedModel, record: EcgRecord, k: int,
                        method: str = "saliency", segmenter=None,
                        **method_kwargs) -> SampleAggregate:
    """Run the per-sample pipeline on the model's centered input window."""
    segmenter = segmenter or OracleSegmenter()
    x = centered_crop(record.signal, model.input_length)
    start = (record.length - model.input_length) // 2
    full_map = segmenter.segment(record)
    window = SegmentationMap(full_map.probs[start : start + model.input_length])
    amap = attribute(model, x, k, method, **method_kwargs)
    peaks = detect_r_peaks(window)
    signal_stack = crop_beats(x, peaks, record.id)
    attr_stack = crop_beats(amap.values, peaks, record.id)
    table = segment_aggregate(np.abs(amap.values), window)
    return SampleAggregate(
        record_id=record.id,
        signal_beat=median_beat(signal_stack),
        attribution_beat=median_beat(attr_stack),
        segment_table=table,
        prediction=model.predict(x),
        n_beats=len(signal_stack),
    )


@dataclass
class GlocalMap:
    class_name: str
    method: str
    sample_ids: list[str]
    median_beat_signal: np.ndarray        # (80, 12)
    median_beat_attribution: np.ndarray   # (80, 12), signed median
    display_attribution: np.ndarray       # (80, 12), |.| scaled to unit max
    segment_table: np.ndarray             # (12, 24), NaN where undefined
    top_segments: list[dict]              # ranked (lead, segment, value)
    mean_prediction: dict[str, float]
    mean_labels: dict[str, float]
    skipped_ids: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "class": self.class_name,
            "method": self.method,
            "sample_ids": self.sample_ids,
            "skipped_ids": self.skipped_ids,
            "mean_prediction": self.mean_prediction,
            "mean_labels": self.mean_labels,
            "top_segments": self.top_segments,
        }


def rank_segments(table: np.ndarray, top: int = 7) -> list[dict]:
    """Highest per-length relevance cells (the table is already a
    per-timestep average, so values are directly comparable)."""
    cells = []
    for l in range(table.shape[0]):
        for m in range(table.shape[1]):
            v = table[l, m]
            if np.isfinite(v):
                cells.append((abs(v), l, m, v))
    cells.sort(key=lambda c: (-c[0], c[1], c[2]))
    return [{"lead": LEADS[l], "segment": SEGMENT_CLASSES[m], "value": v}
            for _, l, m, v in cells[:top]]


def build_glocal_map(model: TrainedModel, dataset: EcgDataset, class_k: int | str,
                     method: str = "saliency", top_n: int = 100,
                     segmenter=None, **method_kwargs) -> GlocalMap:
    """Subgroup-level aggregate: top-n predictions, two-stage medians,
    segment table averaged over samples."""
    k = resolve_class(model, class_k)
    ids = select_subgroup(model, dataset, k, top_n)
    if not ids:
        raise ValueError("empty subgroup")
    samples: list[SampleAggregate] = []
    skipped: list[str] = []
    for rec_id in ids:
        try:
            samples.append(beat_aligned_sample(model, dataset.get(rec_id), k,
                                               method, segmenter, **method_kwargs))
        except ValueError:
            skipped.append(rec_id)
    if not samples:
        raise ValueError("no subgroup sample produced a complete beat")

    signal = np.median(np.stack([s.signal_beat for s in samples]), axis=0)
    attr = np.median(np.stack([s.attribution_beat for s in samples]), axis=0)
    tables = np.stack([s.segment_table for s in samples])
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN cells stay NaN
        table = np.nanmean(tables, axis=0)
    display = np.abs(attr)
    peak = display.max()
    if peak > 0:
        display = display / peak

    classes = model.classes or [f"class{i}" for i in range(model.spec.output_dim)]
    mean_pred = np.mean(np.stack([s.prediction for s in samples]), axis=0)
    mean_labels = {c: float(np.mean([1.0 if c in dataset.get(s.record_id).labels else 0.0
                                     for s in samples])) for c in classes}
    return GlocalMap(
        class_name=classes[k] if k < len(classes) else str(k),
        method=method,
        sample_ids=[s.record_id for s in samples],
        median_beat_signal=signal,
        median_beat_attribution=attr,
        display_attribution=display,
        segment_table=table,
        top_segments=rank_segments(table),
        mean_prediction={c: float(v) for c, v in zip(classes, mean_pred)},
        mean_labels=mean_labels,
        skipped_ids=skipped,
    )
