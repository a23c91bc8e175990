"""Adam training loop for the two heads (multi-label BCE, regression MSE).

Training consumes plain arrays (`TrainData`); dataset containers provide
adapters (see `ecgaudit.synth.dataset.training_data`). Inputs longer than
the configured crop length are randomly cropped per sample and epoch;
everything is reproducible from the config seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from ecgaudit.nn.model import ModelSpec, TrainedModel, build_model, min_input_length
from ecgaudit.seeding import substream


@dataclass
class TrainData:
    """Training arrays: signals (N, T, C) and targets (N, output_dim)."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if len(self.x) != len(self.y):
            raise ValueError("x and y lengths differ")
        if len(self.x) == 0:
            raise ValueError("empty dataset")


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    crop_length: int = 250

    def to_dict(self) -> dict:
        return asdict(self)


def bce_with_logits(z: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy over all (sample, label) cells; stable."""
    loss = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    grad = (1.0 / (1.0 + np.exp(-z)) - y) / z.size
    return float(loss.mean()), grad


def mse(z: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    d = z - y
    return float(np.mean(d * d)), 2.0 * d / d.size


class Adam:
    def __init__(self, params: list[np.ndarray], config: TrainConfig):
        self.params = params
        self.cfg = config
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        c = self.cfg
        self.t += 1
        bias1 = 1.0 - c.beta1 ** self.t
        bias2 = 1.0 - c.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= c.beta1
            m += (1 - c.beta1) * g
            v *= c.beta2
            v += (1 - c.beta2) * g * g
            p -= c.lr * (m / bias1) / (np.sqrt(v / bias2) + c.adam_eps)


def _trainable(model: TrainedModel) -> list[tuple[int, str, np.ndarray]]:
    """(layer index, param name, array) for every optimized parameter."""
    items = []
    for i, layer in enumerate(model.layers):
        params = layer.params()
        for name, arr in params.items():
            if name.endswith("running_mean") or name.endswith("running_var"):
                continue
            items.append((i, name, arr))
    return items


def _collect_grads(model, trace, g_out, names):
    per_layer: dict[int, dict[str, np.ndarray]] = {}
    g = g_out
    for i in range(len(model.layers) - 1, -1, -1):
        g, grads = model.layers[i].backward(trace.caches[i], g)
        per_layer[i] = grads
    return [per_layer[i].get(name, None) for i, name, _ in names]


def _crop(x: np.ndarray, length: int, offsets: np.ndarray) -> np.ndarray:
    if x.shape[1] == length:
        return x
    return np.stack([xi[o : o + length] for xi, o in zip(x, offsets)])


def centered_crop(x: np.ndarray, length: int) -> np.ndarray:
    """Deterministic evaluation crop (center of the record)."""
    t = x.shape[-2]
    if t < length:
        raise ValueError(f"record length {t} below crop length {length}")
    start = (t - length) // 2
    return x[..., start : start + length, :]


def train(spec: ModelSpec, data: TrainData, config: TrainConfig,
          classes: list[str] | None = None) -> TrainedModel:
    """Train a fresh model; deterministic for a fixed config seed.

    Returns the model in inference mode (batchnorm running statistics
    frozen) with `history` (per-epoch mean training loss) attached.
    """
    if data.y.shape[1] != spec.output_dim:
        raise ValueError(
            f"targets have {data.y.shape[1]} columns, head wants {spec.output_dim}")
    crop = min(config.crop_length, data.x.shape[1])
    if crop < min_input_length(spec):
        raise ValueError("crop length below the model's minimum input length")
    model = build_model(spec, seed=config.seed, input_length=crop,
                        in_channels=data.x.shape[2], classes=classes)
    loss_fn = bce_with_logits if spec.head == "sigmoid-multilabel" else mse
    names = _trainable(model)
    opt = Adam([arr for _, _, arr in names], config)
    shuffle_rng = substream(config.seed, "train", "shuffle")
    crop_rng = substream(config.seed, "train", "crop")
    n = len(data.x)
    history = []
    for _epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            xb = data.x[idx]
            offsets = crop_rng.integers(0, data.x.shape[1] - crop + 1, size=len(idx)) \
                if data.x.shape[1] > crop else np.zeros(len(idx), dtype=int)
            xb = _crop(xb, crop, offsets)
            xb_i = np.ascontiguousarray(xb.transpose(0, 2, 1))
            trace = model.run(xb_i, train=True)
            loss, g_out = loss_fn(trace.output, data.y[idx])
            epoch_loss += loss * len(idx)
            grads = _collect_grads(model, trace, g_out, names)
            opt.step([g if g is not None else np.zeros_like(p)
                      for g, (_, _, p) in zip(grads, names)])
        history.append(epoch_loss / n)
    model.history = history
    return model


def training_loss(model: TrainedModel, data: TrainData) -> float:
    """Mean loss on centered crops, inference mode."""
    loss_fn = bce_with_logits if model.spec.head == "sigmoid-multilabel" else mse
    x = centered_crop(data.x, model.input_length)
    z = model.logits(x)
    loss, _ = loss_fn(z, data.y)
    return loss
