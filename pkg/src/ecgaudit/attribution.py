"""Post-hoc attribution methods mapping (model, input, output) to T x 12 maps.

All four methods attribute the pre-activation logit of the requested
output neuron. Saliency and GradCAM maps are non-negative by definition;
integrated gradients and relevance maps keep their sign.

GradCAM lead resolution: on the input layer the 12 leads are the feature
maps and no channel averaging happens, which preserves the lead structure
the specificity metrics need. On a convolutional layer the method yields
one temporal curve (channel-averaged, ReLU-ed, linearly upsampled to T)
that is replicated across the 12 leads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ecgaudit.nn.model import TrainedModel, forward, fold_batchnorm

METHODS = ("saliency", "ig", "gradcam", "lrp-eps", "lrp-zplus")

# Relative scale of the relevance-rule stabilizer. For ReLU networks the
# incoming relevance carries the preactivation as a factor, so the ratio
# never blows up and the stabilizer can sit far below the preactivation
# scale; this keeps the epsilon-rule within 1e-6 of gradient*input.
LRP_EPS_SCALE = 1e-9


@dataclass
class AttributionMap:
    values: np.ndarray            # (T, 12)
    method: str
    output_index: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("attribution map contains non-finite values")


def _batched(x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        return x[None], True
    return x, False


def _maps(values: np.ndarray, single: bool, method: str, k: int,
          **metadata) -> AttributionMap | list[AttributionMap]:
    if single:
        return AttributionMap(values[0], method, k, dict(metadata))
    return [AttributionMap(v, method, k, dict(metadata)) for v in values]


def _input_gradient_batch(model: TrainedModel, x: np.ndarray, k: int) -> np.ndarray:
    if not 0 <= k < model.spec.output_dim:
        raise IndexError(f"output index {k} out of range")
    xi = np.ascontiguousarray(x.transpose(0, 2, 1))
    trace = model.run(xi)
    seed = np.zeros((len(x), model.spec.output_dim))
    seed[:, k] = 1.0
    g = model.backward_to(trace, seed)
    return g.transpose(0, 2, 1)


def saliency(model: TrainedModel, x: np.ndarray, k: int):
    """Elementwise absolute input gradient of logit k."""
    xb, single = _batched(x)
    values = np.abs(_input_gradient_batch(model, xb, k))
    return _maps(values, single, "saliency", k)


def integrated_gradients(model: TrainedModel, x: np.ndarray, k: int,
                         baseline: np.ndarray | None = None, steps: int = 64):
    """Midpoint-rule path integral of input gradients from a baseline.

    The default baseline is the zero signal (no electrical activity).
    """
    if steps < 2:
        raise ValueError("steps must be >= 2")
    xb, single = _batched(x)
    if baseline is None:
        b = np.zeros_like(xb)
    else:
        b = np.asarray(baseline, dtype=np.float64)
        if b.ndim == 2:
            b = np.broadcast_to(b, xb.shape).copy()
        if b.shape != xb.shape:
            raise ValueError(f"baseline shape {b.shape} does not match input")
    diff = xb - b
    total = np.zeros_like(xb)
    for s in range(steps):
        alpha = (s + 0.5) / steps
        total += _input_gradient_batch(model, b + alpha * diff, k)
    values = diff * total / steps
    return _maps(values, single, "ig", k, steps=steps)


def _upsample_linear(curve: np.ndarray, t: int) -> np.ndarray:
    """Resize (N, L) to (N, t) by linear interpolation."""
    n, length = curve.shape
    if length == t:
        return curve
    if length == 1:
        return np.repeat(curve, t, axis=1)
    pos = np.linspace(0.0, length - 1, t)
    grid = np.arange(length, dtype=np.float64)
    return np.stack([np.interp(pos, grid, c) for c in curve])


def gradcam(model: TrainedModel, x: np.ndarray, k: int, layer: int | None = None):
    """Gradient-weighted activation map.

    `layer=None` selects the input-layer variant; otherwise `layer` must
    index a convolutional (or residual) layer whose output activation is
    weighted. Channel weights are temporal means of the activation
    gradient.
    """
    xb, single = _batched(x)
    t = xb.shape[1]
    if layer is None:
        grad = _input_gradient_batch(model, xb, k)       # (N, T, 12)
        alpha = grad.mean(axis=1, keepdims=True)          # (N, 1, 12)
        values = np.maximum(alpha * xb, 0.0)
        return _maps(values, single, "gradcam", k, layer="input")

    if not 0 <= layer < len(model.layers):
        raise IndexError(f"layer {layer} out of range")
    if model.spec.layers[layer].kind not in ("conv1d", "residual-block"):
        raise ValueError(
            f"gradcam needs a convolutional layer, layer {layer} is "
            f"{model.spec.layers[layer].kind}")
    from ecgaudit.nn.model import layer_gradient, layer_activation

    acts = layer_activation(model, xb, layer + 1)         # (N, C, L)
    grads = layer_gradient(model, xb, layer + 1, k)       # (N, C, L)
    alpha = grads.mean(axis=2, keepdims=True)             # (N, C, 1)
    curve = np.maximum((alpha * acts).mean(axis=1), 0.0)  # (N, L)
    up = _upsample_linear(curve, t)                       # (N, T)
    values = np.repeat(up[:, :, None], xb.shape[2], axis=2)
    return _maps(values, single, "gradcam", k, layer=layer)


def lrp(model: TrainedModel, x: np.ndarray, k: int, rule: str = "eps",
        eps_scale: float = LRP_EPS_SCALE):
    """Layer-wise relevance propagation of logit k back to the input.

    Requires a batchnorm-free model (`fold_batchnorm` first). Rules:
    "eps" (default, used on all layers) or "zplus-conv" (positive-weight
    rule on convolutions, "eps" elsewhere).
    """
    if rule not in ("eps", "zplus-conv"):
        raise ValueError(f"unknown lrp rule {rule!r}")
    has_bn = any(ls.kind == "batchnorm1d" or
                 (ls.kind == "residual-block" and ls.batchnorm)
                 for ls in model.spec.layers)
    if has_bn:
        raise ValueError(
            "model contains batchnorm layers; apply fold_batchnorm first")
    if not 0 <= k < model.spec.output_dim:
        raise IndexError(f"output index {k} out of range")
    xb, single = _batched(x)
    xi = np.ascontiguousarray(xb.transpose(0, 2, 1))
    trace = model.run(xi)
    rel = np.zeros((len(xb), model.spec.output_dim))
    rel[:, k] = trace.output[:, k]
    for i in range(len(model.layers) - 1, -1, -1):
        rel = model.layers[i].relevance(trace.caches[i], rel, rule, eps_scale)
    values = rel.transpose(0, 2, 1)
    method = "lrp-eps" if rule == "eps" else "lrp-zplus"
    return _maps(values, single, method, k, rule=rule, eps_scale=eps_scale)


def attribute(model: TrainedModel, x: np.ndarray, k: int, method: str,
              **kwargs):
    """Dispatch by method name; `lrp-*` folds batchnorm automatically."""
    if method == "saliency":
        return saliency(model, x, k)
    if method == "ig":
        return integrated_gradients(model, x, k, **kwargs)
    if method == "gradcam":
        return gradcam(model, x, k, **kwargs)
    if method in ("lrp", "lrp-eps"):
        return lrp(fold_batchnorm(model), x, k, rule="eps", **kwargs)
    if method == "lrp-zplus":
        return lrp(fold_batchnorm(model), x, k, rule="zplus-conv", **kwargs)
    raise ValueError(f"unknown attribution method {method!r}")


def save_attribution(amap: AttributionMap, path: str | Path,
                     checkpoint_id: str | None = None) -> None:
    """Binary map mirroring the signals.bin layout plus a JSON sidecar."""
    path = Path(path)
    path.write_bytes(amap.values.astype("<f4").tobytes())
    sidecar = {
        "method": amap.method,
        "output_index": amap.output_index,
        "shape": list(amap.values.shape),
        "metadata": amap.metadata,
        "checkpoint_id": checkpoint_id,
    }
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
