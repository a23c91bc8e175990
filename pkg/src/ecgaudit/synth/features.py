"""Measurement extraction feeding the concept rule engine.

All amplitudes are the signal value at the annotated peak minus the
lead's isoelectric baseline (median over tp-segment samples); Q and S
amplitudes keep their sign. Durations come from annotated fiducial
extents; ST amplitude is taken 60 ms after the QRS offset. Multi-beat
records aggregate per-beat measurements by median.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ecgaudit.synth.schema import LEADS, SEGMENT_INDEX, SAMPLE_RATE, FIDUCIALS

_PER_LEAD = ("P_Amp", "Q_Amp", "R_Amp", "S_Amp", "T_Amp",
             "Q_Dur", "R_Dur", "ST_Amp", "T_Morph")
FEATURE_FIELDS = tuple(f"{name}_{lead}" for lead in LEADS for name in _PER_LEAD) \
    + ("QRS_Dur_Global", "AGE", "SEX")

T_MORPH_DEADBAND = 0.05  # mV
ST_OFFSET = int(round(0.060 * SAMPLE_RATE))  # J + 60 ms


@dataclass
class EcgFeatures:
    values: dict[str, float]

    def __getitem__(self, key: str) -> float:
        return self.values[key]

    def as_row(self) -> list[float]:
        return [self.values[f] for f in FEATURE_FIELDS]


def _fiducial_indices(ann: np.ndarray) -> dict[str, np.ndarray]:
    return {name: np.flatnonzero(ann == SEGMENT_INDEX[name]) for name in FIDUCIALS}


def extract_features(record, annotation: np.ndarray | None = None) -> EcgFeatures:
    """Measure wave amplitudes/durations from annotations.

    `annotation` overrides the record's own (e.g. an argmax of a learned
    segmenter's output); records without either are rejected.
    """
    ann = annotation if annotation is not None else record.annotation
    if ann is None:
        raise ValueError(
            f"record {record.id}: no annotation and no delineation output")
    signal = record.signal
    tp_id = SEGMENT_INDEX["tp"]

    values: dict[str, float] = {}
    onsets_per_lead = []
    offsets_per_lead = []
    for j, lead in enumerate(LEADS):
        lead_ann = ann[:, j]
        lead_sig = signal[:, j]
        tp_samples = lead_sig[lead_ann == tp_id]
        baseline = float(np.median(tp_samples)) if len(tp_samples) else 0.0
        fid = _fiducial_indices(lead_ann)
        n_beats = min(len(v) for v in fid.values())
        if n_beats == 0:
            raise ValueError(f"record {record.id}: lead {lead} has no complete beat")
        fid = {k: v[:n_beats] for k, v in fid.items()}
        onsets_per_lead.append(fid["qrs_onset"])
        offsets_per_lead.append(fid["qrs_offset"])

        def amp(point: str) -> float:
            return float(np.median(lead_sig[fid[point]]) - baseline)

        values[f"P_Amp_{lead}"] = amp("p_peak")
        values[f"Q_Amp_{lead}"] = amp("q_peak")
        values[f"R_Amp_{lead}"] = amp("r_peak")
        values[f"S_Amp_{lead}"] = amp("s_peak")
        t_amp = amp("t_peak")
        values[f"T_Amp_{lead}"] = t_amp
        # symmetric-wave extent: onset-to-peak doubled
        values[f"Q_Dur_{lead}"] = float(
            np.median(2.0 * (fid["q_peak"] - fid["qrs_onset"])) / SAMPLE_RATE)
        values[f"R_Dur_{lead}"] = float(
            np.median(fid["s_peak"] - fid["q_peak"]) / SAMPLE_RATE)
        st_idx = fid["qrs_offset"] + ST_OFFSET
        st_idx = st_idx[st_idx < len(lead_sig)]
        values[f"ST_Amp_{lead}"] = (
            float(np.median(lead_sig[st_idx]) - baseline) if len(st_idx) else 0.0)
        values[f"T_Morph_{lead}"] = (
            1.0 if t_amp > T_MORPH_DEADBAND
            else -1.0 if t_amp < -T_MORPH_DEADBAND else 0.0)

    n_beats = min(len(v) for v in onsets_per_lead)
    onsets = np.stack([v[:n_beats] for v in onsets_per_lead])
    offsets = np.stack([v[:n_beats] for v in offsets_per_lead])
    values["QRS_Dur_Global"] = float(
        np.median(offsets.max(axis=0) - onsets.min(axis=0)) / SAMPLE_RATE)
    values["AGE"] = float(record.age)
    values["SEX"] = 1.0 if record.sex == "female" else 0.0
    return EcgFeatures(values=values)
