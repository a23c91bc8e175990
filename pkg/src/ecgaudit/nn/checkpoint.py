"""Model checkpoints: JSON manifest plus one raw float64 file per tensor.

Directory layout::

    manifest.json            architecture, seed, training config, metrics
    layer00.weight.f64       little-endian float64, C-order
    layer00.bias.f64
    ...

Parameter files are named by layer index and role, exactly as listed in
the manifest, so a checkpoint can be read without this library.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ecgaudit.nn.model import ModelSpec, TrainedModel, build_model

FORMAT_VERSION = 1


def save_checkpoint(model: TrainedModel, directory: str | Path,
                    train_config: dict | None = None,
                    metrics: dict | None = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    params = []
    for name, arr in model.param_items():
        fname = f"{name}.f64"
        (directory / fname).write_bytes(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        params.append({"file": fname, "name": name, "shape": list(arr.shape)})
    manifest = {
        "format_version": FORMAT_VERSION,
        "architecture": model.spec.to_dict(),
        "seed": model.seed,
        "folded": model.folded,
        "input_length": model.input_length,
        "in_channels": model.in_channels,
        "classes": model.classes,
        "train_config": train_config,
        "metrics": metrics,
        "history": list(getattr(model, "history", [])),
        "parameters": params,
    }
    (directory / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return directory


def load_checkpoint(directory: str | Path) -> TrainedModel:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    if manifest["format_version"] != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format {manifest['format_version']}")
    spec = ModelSpec.from_dict(manifest["architecture"])
    model = build_model(spec, seed=manifest["seed"],
                        input_length=manifest["input_length"],
                        in_channels=manifest["in_channels"],
                        classes=manifest.get("classes") or [])
    model.folded = manifest["folded"]
    by_name = dict(model.param_items())
    for entry in manifest["parameters"]:
        raw = (directory / entry["file"]).read_bytes()
        arr = np.frombuffer(raw, dtype="<f8").reshape(entry["shape"])
        target = by_name[entry["name"]]
        if target.shape != arr.shape:
            raise ValueError(
                f"parameter {entry['name']}: manifest shape {arr.shape} "
                f"does not match spec shape {target.shape}")
        target[...] = arr
    model.history = manifest.get("history", [])
    return model
