"""Auditing toolkit for deep 12-lead ECG classifiers.

Subpackages cover the full pipeline: a small numpy neural-network core
(`ecgaudit.nn`), a synthetic 12-lead generator with exact fiducial ground
truth (`ecgaudit.synth`), post-hoc attribution methods
(`ecgaudit.attribution`), specificity sanity checks (`ecgaudit.sanity`),
soft segmentation and R-peak detection (`ecgaudit.delineation`),
beat/segment-aligned aggregation (`ecgaudit.glocal`), concept testing
(`ecgaudit.concepts`), and attribution-space subgroup discovery
(`ecgaudit.discovery`). The `ecgaudit` CLI wires these into reproducible
batch runs.
"""

__version__ = "0.1.0"
