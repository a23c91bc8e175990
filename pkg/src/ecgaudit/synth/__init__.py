"""Synthetic 12-lead ECG generation with exact fiducial ground truth."""

from ecgaudit.synth.schema import (
    LEADS,
    LEAD_INDEX,
    SEGMENT_CLASSES,
    SEGMENT_INDEX,
    POINT_CLASSES,
    N_SEGMENT_CLASSES,
    SAMPLE_RATE,
)
from ecgaudit.synth.generator import SynthConfig, generate, derive_limb_leads
from ecgaudit.synth.features import EcgFeatures, extract_features, FEATURE_FIELDS
from ecgaudit.synth.dataset import (
    EcgRecord,
    EcgDataset,
    save_dataset,
    load_dataset,
    lead_cross_correlation,
    training_data,
)

__all__ = [
    "LEADS", "LEAD_INDEX", "SEGMENT_CLASSES", "SEGMENT_INDEX", "POINT_CLASSES",
    "N_SEGMENT_CLASSES", "SAMPLE_RATE",
    "SynthConfig", "generate", "derive_limb_leads",
    "EcgFeatures", "extract_features", "FEATURE_FIELDS",
    "EcgRecord", "EcgDataset", "save_dataset", "load_dataset",
    "lead_cross_correlation", "training_data",
]
