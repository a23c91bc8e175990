"""Synthetic 12-lead generator with exact 24-class fiducial annotations.

Eight channels (I, II, V1..V6) are synthesized as sums of per-wave
Gaussians on a regular beat grid; the remaining four limb leads follow
from the standard linear relations, so the identity I - II + III = 0
holds exactly on every record. Class-conditioned parameter shifts realize
recognizable pathology morphologies (inflated R_V5 for an LVH-like class,
widened QRS for a CLBBB-like class, Q waves / lost R progression for
AMI/IMI-like classes) whose extracted features drive the concept rules.

Annotations are written per lead; derived limb leads inherit the fiducial
grid of their dominant source channel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ecgaudit.seeding import substream
from ecgaudit.synth.schema import (
    LEADS, SOURCE_CHANNELS, SEGMENT_INDEX, SAMPLE_RATE,
)
from ecgaudit.synth.dataset import EcgRecord, EcgDataset, assign_splits

WAVES = ("P", "Q", "R", "S", "T")

# base per-channel wave amplitudes (mV), channels I, II, V1..V6
_BASE_AMPS = {
    "P": {"I": 0.08, "II": 0.15, "V1": 0.05, "V2": 0.06, "V3": 0.07,
          "V4": 0.08, "V5": 0.08, "V6": 0.07},
    "Q": {"I": -0.05, "II": -0.08, "V1": -0.02, "V2": -0.02, "V3": -0.03,
          "V4": -0.06, "V5": -0.08, "V6": -0.07},
    "R": {"I": 0.6, "II": 0.9, "V1": 0.25, "V2": 0.5, "V3": 0.9,
          "V4": 1.3, "V5": 1.4, "V6": 1.1},
    "S": {"I": -0.15, "II": -0.2, "V1": -0.9, "V2": -1.1, "V3": -0.7,
          "V4": -0.4, "V5": -0.25, "V6": -0.15},
    "T": {"I": 0.15, "II": 0.25, "V1": -0.06, "V2": 0.2, "V3": 0.3,
          "V4": 0.35, "V5": 0.3, "V6": 0.25},
}

_BASE_WIDTHS = {"P": 2.5, "Q": 0.8, "R": 1.2, "S": 0.8, "T": 4.0}

# fiducial offsets in samples relative to the R-peak
_BASE_GEOMETRY = {
    "p_peak": -16, "p_half": 5,
    "q_peak": -3, "q_margin": 1,
    "s_peak": 3, "s_margin": 1,
    "l_gap": 3,
    "t_peak": 30, "t_half": 8,
}

# built-in label-conditioned shifts
_CLASS_SHIFTS: dict[str, dict] = {
    "norm": {},
    "lvh": {
        "amps": {"R": {"V5": 4.2, "V6": 3.3, "I": 1.2},
                 "S": {"V1": -0.5, "V2": -0.6}},
    },
    "clbbb": {
        "amps": {"R": {"V1": 0.1, "V5": 1.0, "V6": 0.9},
                 "S": {"V1": -1.4, "V2": -1.5}},
        "widths": {"R": 2.4},
        "geometry": {"q_peak": -5, "q_margin": 2, "s_peak": 5, "s_margin": 2},
    },
    "ami": {
        "amps": {"R": {"V1": 0.05, "V2": 0.05, "V3": 0.08},
                 "Q": {"V1": -0.25, "V2": -0.3, "V3": -0.3}},
        "channel_geometry": {"V1": {"q_margin": 2}, "V2": {"q_margin": 2},
                             "V3": {"q_margin": 2}},
    },
    "imi": {
        "amps": {"Q": {"II": -0.4}, "R": {"II": 0.6}},
        "channel_geometry": {"II": {"q_margin": 2}},
    },
}

# annotation source channel for the derived limb leads
_DERIVED_ANNOTATION = {"III": "II", "aVR": "II", "aVL": "I", "aVF": "II"}


@dataclass
class SynthConfig:
    seed: int = 0
    signal_length: int = 600
    rate_range: tuple[float, float] = (55.0, 95.0)
    noise: float = 0.02            # additive white noise std, mV
    amp_jitter: float = 0.08       # relative per-record amplitude jitter
    scale_jitter: float = 0.0      # relative per-record global gain jitter
    baseline_jitter: float = 0.0   # per-channel constant offset std, mV
    classes: tuple[str, ...] = ("norm",)
    class_weights: tuple[float, ...] | None = None
    age_range: tuple[float, float] = (30.0, 90.0)
    female_fraction: float = 0.5
    female_amp_scale: float = 1.0  # < 1 couples sex to morphology
    class_shifts: dict = field(default_factory=dict)  # extra/override shifts

    def shift_for(self, cls: str) -> dict:
        if cls in self.class_shifts:
            return self.class_shifts[cls]
        if cls in _CLASS_SHIFTS:
            return _CLASS_SHIFTS[cls]
        raise ValueError(f"unknown class {cls!r}: no built-in or configured shift")

    def validate(self) -> None:
        lo, hi = self.rate_range
        if not (40.0 <= lo <= hi <= 180.0):
            raise ValueError(f"heart rate range {self.rate_range} outside [40, 180]")
        if self.signal_length < 250:
            raise ValueError("signal_length must be at least 250")
        for cls in self.classes:
            geo = dict(_BASE_GEOMETRY)
            geo.update(self.shift_for(cls).get("geometry", {}))
            pre = geo["p_peak"] - geo["p_half"]
            post = geo["t_peak"] + geo["t_half"]
            min_rr = int(round(60.0 * SAMPLE_RATE / hi))
            if post - pre + 2 > min_rr:
                raise ValueError(
                    f"class {cls!r}: beat extent {post - pre} samples exceeds the "
                    f"shortest beat period {min_rr} at {hi} bpm")


def derive_limb_leads(lead_i: np.ndarray, lead_ii: np.ndarray) -> dict[str, np.ndarray]:
    """Standard Einthoven/Goldberger relations from leads I and II."""
    lead_i = np.asarray(lead_i, dtype=np.float64)
    lead_ii = np.asarray(lead_ii, dtype=np.float64)
    if lead_i.shape != lead_ii.shape:
        raise ValueError("lead I and II lengths differ")
    return {
        "I": lead_i,
        "II": lead_ii,
        "III": lead_ii - lead_i,
        "aVR": -(lead_i + lead_ii) / 2.0,
        "aVL": lead_i - lead_ii / 2.0,
        "aVF": lead_ii - lead_i / 2.0,
    }


def _merged(base: dict, override: dict) -> dict:
    out = dict(base)
    out.update(override)
    return out


def _beat_fiducials(r: int, geo: dict) -> dict[str, int]:
    q_peak = r + geo["q_peak"]
    s_peak = r + geo["s_peak"]
    p_peak = r + geo["p_peak"]
    t_peak = r + geo["t_peak"]
    return {
        "p_onset": p_peak - geo["p_half"],
        "p_peak": p_peak,
        "p_offset": p_peak + geo["p_half"],
        "qrs_onset": q_peak - geo["q_margin"],
        "q_peak": q_peak,
        "r_peak": r,
        "s_peak": s_peak,
        "qrs_offset": s_peak + geo["s_margin"],
        "l_point": s_peak + geo["s_margin"] + geo["l_gap"],
        "t_onset": t_peak - geo["t_half"],
        "t_peak": t_peak,
        "t_offset": t_peak + geo["t_half"],
    }


_SEGMENT_BETWEEN = [
    ("p_onset", "p_peak", "p_rise"),
    ("p_peak", "p_offset", "p_fall"),
    ("p_offset", "qrs_onset", "pq"),
    ("qrs_onset", "q_peak", "q_fall"),
    ("q_peak", "r_peak", "qr"),
    ("r_peak", "s_peak", "rs"),
    ("s_peak", "qrs_offset", "s_rise"),
    ("qrs_offset", "l_point", "ql"),
    ("l_point", "t_onset", "lt"),
    ("t_onset", "t_peak", "t_rise"),
    ("t_peak", "t_offset", "t_fall"),
]


def _write_beat_annotation(ann: np.ndarray, fid: dict[str, int]) -> None:
    for a, b, seg in _SEGMENT_BETWEEN:
        ann[fid[a] + 1 : fid[b]] = SEGMENT_INDEX[seg]
    for point, idx in fid.items():
        ann[idx] = SEGMENT_INDEX[point]


def _wave_centers(fid: dict[str, int]) -> dict[str, int]:
    return {"P": fid["p_peak"], "Q": fid["q_peak"], "R": fid["r_peak"],
            "S": fid["s_peak"], "T": fid["t_peak"]}


def _render_record(config: SynthConfig, rng: np.random.Generator,
                   rec_id: str) -> EcgRecord:
    t_len = config.signal_length
    weights = config.class_weights
    cls = str(rng.choice(list(config.classes), p=weights))
    shift = config.shift_for(cls)

    bpm = rng.uniform(*config.rate_range)
    rr = int(round(60.0 * SAMPLE_RATE / bpm))
    age = float(rng.uniform(*config.age_range))
    sex = "female" if rng.random() < config.female_fraction else "male"

    widths = _merged(_BASE_WIDTHS, shift.get("widths", {}))
    base_geo = _merged(_BASE_GEOMETRY, shift.get("geometry", {}))
    chan_geo = {ch: _merged(base_geo, shift.get("channel_geometry", {}).get(ch, {}))
                for ch in SOURCE_CHANNELS}

    gain = 1.0 + config.scale_jitter * rng.standard_normal()
    if sex == "female":
        gain *= config.female_amp_scale
    amps: dict[str, dict[str, float]] = {}
    for wave in WAVES:
        base = _merged(_BASE_AMPS[wave], shift.get("amps", {}).get(wave, {}))
        amps[wave] = {ch: base[ch] * gain * (1.0 + config.amp_jitter * rng.standard_normal())
                      for ch in SOURCE_CHANNELS}

    pre = max(-(g["p_peak"] - g["p_half"]) for g in chan_geo.values())
    post = max(g["t_peak"] + g["t_half"] for g in chan_geo.values())
    r0 = pre + 1 + int(rng.integers(0, rr))
    r_peaks = list(range(r0, t_len - post - 1, rr))
    if not r_peaks:
        raise ValueError("signal too short for a single beat at this rate")

    channels: dict[str, np.ndarray] = {}
    annotations: dict[str, np.ndarray] = {}
    ts = np.arange(t_len, dtype=np.float64)
    for ch in SOURCE_CHANNELS:
        sig = np.zeros(t_len)
        ann = np.full(t_len, SEGMENT_INDEX["tp"], dtype=np.uint8)
        for r in r_peaks:
            fid = _beat_fiducials(r, chan_geo[ch])
            _write_beat_annotation(ann, fid)
            for wave, center in _wave_centers(fid).items():
                w = widths[wave]
                sig += amps[wave][ch] * np.exp(-0.5 * ((ts - center) / w) ** 2)
        if config.baseline_jitter:
            sig += config.baseline_jitter * rng.standard_normal()
        if config.noise:
            sig += config.noise * rng.standard_normal(t_len)
        channels[ch] = sig
        annotations[ch] = ann

    limb = derive_limb_leads(channels["I"], channels["II"])
    signal = np.zeros((t_len, len(LEADS)))
    annotation = np.zeros((t_len, len(LEADS)), dtype=np.uint8)
    for j, lead in enumerate(LEADS):
        signal[:, j] = limb[lead] if lead in limb else channels[lead]
        src = _DERIVED_ANNOTATION.get(lead, lead)
        annotation[:, j] = annotations[src]

    return EcgRecord(id=rec_id, signal=signal, labels={cls}, age=age, sex=sex,
                     annotation=annotation)


def generate(config: SynthConfig, n: int) -> EcgDataset:
    """Generate `n` annotated records; deterministic per config seed.

    Records draw independent substreams from the master seed, so
    generation order (or parallel generation) cannot change any record.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    config.validate()
    records = [_render_record(config, substream(config.seed, "record", i), f"rec{i:05d}")
               for i in range(n)]
    splits = assign_splits(records, substream(config.seed, "split"))
    return EcgDataset(records=records, splits=splits)
