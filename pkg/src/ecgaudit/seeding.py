"""Deterministic named random substreams.

All randomness in the toolkit flows from one master seed. Components draw
independent generators through `substream(master, *names)` so that, e.g.,
training noise and negative-sample resampling never interact, and any run
is reproducible from its recorded master seed alone.
"""

from __future__ import annotations

import zlib

import numpy as np


def _name_key(name: str) -> int:
    # crc32 is stable across platforms and python versions
    return zlib.crc32(name.encode("utf-8"))


def substream(master_seed: int, *names: str | int) -> np.random.Generator:
    """Return a generator for the substream addressed by `names`.

    Same master seed and name path always yields the same stream;
    different name paths are statistically independent.
    """
    keys = [int(master_seed)]
    for name in names:
        keys.append(_name_key(name) if isinstance(name, str) else int(name))
    return np.random.default_rng(np.random.SeedSequence(keys))
