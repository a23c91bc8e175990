"""Model specification, construction, forward/gradient passes, BN folding.

Public tensors are laid out (time, leads); internally layers run on
(batch, channels, time). `forward` accepts a single (T, 12) sample or a
(N, T, 12) batch and returns logits of shape (output_dim,) or
(N, output_dim). Gradients are always taken on the pre-activation logits.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, asdict

import numpy as np

from ecgaudit.nn import layers as L
from ecgaudit.seeding import substream


class ShapeError(ValueError):
    """Input/parameter shape mismatch, naming the offending layer."""


_LAYER_KINDS = (
    "conv1d", "batchnorm1d", "relu", "maxpool1d", "avgpool1d",
    "globalavgpool", "linear", "residual-block",
)

_HEADS = ("sigmoid-multilabel", "linear-regression")


@dataclass
class LayerSpec:
    """One layer; fields beyond `kind` apply per kind (see validation)."""

    kind: str
    in_channels: int | None = None
    out_channels: int | None = None
    kernel: int | None = None
    stride: int = 1
    padding: int = 0
    window: int | None = None
    in_features: int | None = None
    out_features: int | None = None
    batchnorm: bool = True  # residual blocks only

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @staticmethod
    def from_dict(d: dict) -> "LayerSpec":
        return LayerSpec(**d)


@dataclass
class ModelSpec:
    layers: list[LayerSpec]
    head: str
    output_dim: int

    def to_dict(self) -> dict:
        return {
            "layers": [l.to_dict() for l in self.layers],
            "head": self.head,
            "output_dim": self.output_dim,
        }

    @staticmethod
    def from_dict(d: dict) -> "ModelSpec":
        return ModelSpec(
            layers=[LayerSpec.from_dict(l) for l in d["layers"]],
            head=d["head"],
            output_dim=d["output_dim"],
        )


def validate_spec(spec: ModelSpec, in_channels: int = 12) -> None:
    """Check layer-kind fields and channel chaining; raise ShapeError."""
    if spec.head not in _HEADS:
        raise ShapeError(f"unknown head {spec.head!r}")
    channels = in_channels
    temporal = True
    for i, ls in enumerate(spec.layers):
        where = f"layer {i} ({ls.kind})"
        if ls.kind not in _LAYER_KINDS:
            raise ShapeError(f"{where}: unknown kind")
        if ls.kind in ("conv1d", "residual-block"):
            if not temporal:
                raise ShapeError(f"{where}: needs temporal input")
            if ls.in_channels != channels:
                raise ShapeError(
                    f"{where}: expects {ls.in_channels} channels, gets {channels}")
            if ls.kernel is None or ls.kernel < 1 or ls.stride < 1:
                raise ShapeError(f"{where}: kernel/stride must be >= 1")
            channels = ls.out_channels
        elif ls.kind == "batchnorm1d":
            if not temporal:
                raise ShapeError(f"{where}: needs temporal input")
            if ls.in_channels != channels:
                raise ShapeError(
                    f"{where}: expects {ls.in_channels} channels, gets {channels}")
        elif ls.kind in ("maxpool1d", "avgpool1d"):
            if not temporal:
                raise ShapeError(f"{where}: needs temporal input")
            if ls.window is None or ls.window < 1:
                raise ShapeError(f"{where}: window must be >= 1")
        elif ls.kind == "globalavgpool":
            if not temporal:
                raise ShapeError(f"{where}: needs temporal input")
            temporal = False
        elif ls.kind == "linear":
            if temporal:
                raise ShapeError(f"{where}: needs flat input (pool first)")
            if ls.in_features != channels:
                raise ShapeError(
                    f"{where}: expects {ls.in_features} features, gets {channels}")
            channels = ls.out_features
    if temporal:
        raise ShapeError("model must end in a dense head (missing globalavgpool)")
    if channels != spec.output_dim:
        raise ShapeError(
            f"final layer produces {channels} features, head wants {spec.output_dim}")


def _build_layer(ls: LayerSpec):
    if ls.kind == "conv1d":
        return L.Conv1d(ls.in_channels, ls.out_channels, ls.kernel, ls.stride, ls.padding)
    if ls.kind == "batchnorm1d":
        return L.BatchNorm1d(ls.in_channels)
    if ls.kind == "relu":
        return L.ReLU()
    if ls.kind == "maxpool1d":
        return L.MaxPool1d(ls.window)
    if ls.kind == "avgpool1d":
        return L.AvgPool1d(ls.window)
    if ls.kind == "globalavgpool":
        return L.GlobalAvgPool()
    if ls.kind == "linear":
        return L.Linear(ls.in_features, ls.out_features)
    if ls.kind == "residual-block":
        return L.ResidualBlock(ls.in_channels, ls.out_channels, ls.stride,
                               ls.kernel, ls.batchnorm)
    raise ShapeError(f"unknown layer kind {ls.kind!r}")


@dataclass
class ForwardTrace:
    """Per-layer activations of one forward pass.

    `activations[i]` is the input of layer i (internal layout);
    `activations[-1]` is the final logit tensor. `caches[i]` holds what
    layer i's backward needs. Replaying the caches layer by layer
    reproduces the output exactly.
    """

    activations: list[np.ndarray]
    caches: list[dict]

    @property
    def output(self) -> np.ndarray:
        return self.activations[-1]


@dataclass
class TrainedModel:
    spec: ModelSpec
    layers: list
    seed: int = 0
    folded: bool = False
    input_length: int = 250
    in_channels: int = 12
    classes: list[str] = field(default_factory=list)

    # -- plumbing -------------------------------------------------------

    def _to_internal(self, x: np.ndarray) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 2
        if single:
            x = x[None]
        if x.ndim != 3 or x.shape[2] != self.in_channels:
            raise ShapeError(
                f"input must be (T, {self.in_channels}) or (N, T, {self.in_channels}),"
                f" got {x.shape}")
        return np.ascontiguousarray(x.transpose(0, 2, 1)), single

    def run(self, x_internal: np.ndarray, train: bool = False) -> ForwardTrace:
        acts = [x_internal]
        caches = []
        h = x_internal
        for i, layer in enumerate(self.layers):
            try:
                h, cache = layer.forward(h, train=train)
            except ValueError as exc:
                raise ShapeError(f"layer {i} ({layer.kind}): {exc}") from exc
            acts.append(h)
            caches.append(cache)
        return ForwardTrace(activations=acts, caches=caches)

    def run_from(self, trace: ForwardTrace, layer_index: int,
                 activation: np.ndarray) -> np.ndarray:
        """Re-run layers `layer_index`.. on a replacement input activation."""
        h = activation
        for layer in self.layers[layer_index:]:
            h, _ = layer.forward(h, train=False)
        return h

    def backward_to(self, trace: ForwardTrace, g_out: np.ndarray,
                    layer_index: int = 0) -> np.ndarray:
        """Backpropagate an output cotangent down to the input of `layer_index`."""
        g = g_out
        for i in range(len(self.layers) - 1, layer_index - 1, -1):
            g, _ = self.layers[i].backward(trace.caches[i], g)
        return g

    # -- public surface -------------------------------------------------

    def logits(self, x: np.ndarray) -> np.ndarray:
        y, _ = forward(self, x)
        return y

    def predict(self, x: np.ndarray) -> np.ndarray:
        z = self.logits(x)
        if self.spec.head == "sigmoid-multilabel":
            return 1.0 / (1.0 + np.exp(-z))
        return z

    def param_items(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for i, layer in enumerate(self.layers):
            for name, arr in layer.params().items():
                out.append((f"layer{i:02d}.{name}", arr))
        return out

    def clone(self) -> "TrainedModel":
        return copy.deepcopy(self)


def build_model(spec: ModelSpec, seed: int = 0, input_length: int = 250,
                in_channels: int = 12, classes: list[str] | None = None) -> TrainedModel:
    validate_spec(spec, in_channels)
    rng = substream(seed, "init")
    built = []
    for ls in spec.layers:
        layer = _build_layer(ls)
        layer.init_params(rng)
        built.append(layer)
    return TrainedModel(spec=spec, layers=built, seed=seed,
                        input_length=input_length, in_channels=in_channels,
                        classes=list(classes or []))


def min_input_length(spec: ModelSpec) -> int:
    """Smallest T for which every temporal layer still has output length >= 1.

    Computed by inverting each temporal layer's length arithmetic from the
    head back to the input (residual blocks pad symmetrically, so only
    their stride matters).
    """
    need = 1
    for ls in reversed(spec.layers):
        if ls.kind == "conv1d":
            need = (need - 1) * ls.stride + ls.kernel - 2 * ls.padding
            need = max(need, 1)
        elif ls.kind == "residual-block":
            need = (need - 1) * ls.stride + 1
        elif ls.kind in ("maxpool1d", "avgpool1d"):
            need = need * ls.window
    return max(need, 1)


def forward(model: TrainedModel, x: np.ndarray,
            keep_trace: bool = False) -> tuple[np.ndarray, ForwardTrace | None]:
    """Run the model; returns (logits, trace or None)."""
    xi, single = model._to_internal(x)
    if xi.shape[2] < min_input_length(model.spec):
        raise ShapeError(
            f"input length {xi.shape[2]} below model minimum "
            f"{min_input_length(model.spec)}")
    trace = model.run(xi, train=False)
    y = trace.output
    if single:
        y = y[0]
    return y, (trace if keep_trace else None)


def _output_seed(model: TrainedModel, n: int, output_index: int) -> np.ndarray:
    if not 0 <= output_index < model.spec.output_dim:
        raise IndexError(
            f"output index {output_index} out of range 0..{model.spec.output_dim - 1}")
    g = np.zeros((n, model.spec.output_dim))
    g[:, output_index] = 1.0
    return g


def input_gradient(model: TrainedModel, x: np.ndarray, output_index: int) -> np.ndarray:
    """d logit[output_index] / d input, same shape as the input."""
    xi, single = model._to_internal(x)
    trace = model.run(xi)
    g = model.backward_to(trace, _output_seed(model, xi.shape[0], output_index))
    g = g.transpose(0, 2, 1)
    return g[0] if single else g


def layer_gradient(model: TrainedModel, x: np.ndarray, layer_index: int,
                   output_index: int) -> np.ndarray:
    """d logit[output_index] / d activation, in internal (N, C, T) layout.

    `layer_index` addresses a trace position: the activation feeding layer
    `layer_index`; 0 is the model input, len(layers) the output logits.
    """
    n_layers = len(model.layers)
    if not 0 <= layer_index <= n_layers:
        raise IndexError(f"layer index {layer_index} out of range 0..{n_layers}")
    xi, single = model._to_internal(x)
    g = _output_seed(model, xi.shape[0], output_index)
    if layer_index < n_layers:
        trace = model.run(xi)
        g = model.backward_to(trace, g, layer_index)
    return g[0] if single else g


def layer_activation(model: TrainedModel, x: np.ndarray, layer_index: int) -> np.ndarray:
    """Activation at a trace position (input of layer `layer_index`)."""
    xi, single = model._to_internal(x)
    trace = model.run(xi)
    a = trace.activations[layer_index]
    return a[0] if single else a


def fold_batchnorm(model: TrainedModel) -> TrainedModel:
    """Fold batchnorm running statistics into adjacent conv/linear weights.

    Returns a new model whose forward outputs match the original within
    float rounding; the original is untouched. A model without batchnorm
    is returned unchanged (same object).
    """
    has_bn = any(ls.kind == "batchnorm1d" or
                 (ls.kind == "residual-block" and ls.batchnorm)
                 for ls in model.spec.layers)
    if not has_bn:
        return model

    def fold_into(conv_or_linear, bn: L.BatchNorm1d):
        scale = bn.gamma / np.sqrt(bn.running_var + bn.eps)
        if isinstance(conv_or_linear, L.Conv1d):
            conv_or_linear.weight *= scale[:, None, None]
        else:
            conv_or_linear.weight *= scale[:, None]
        if conv_or_linear.bias is None:
            conv_or_linear.has_bias = True
            conv_or_linear.bias = np.zeros(len(scale))
        conv_or_linear.bias = (conv_or_linear.bias - bn.running_mean) * scale + bn.beta

    new_layers: list = []
    new_specs: list[LayerSpec] = []
    for ls, layer in zip(model.spec.layers, model.layers):
        if ls.kind == "batchnorm1d":
            if not new_layers or new_specs[-1].kind not in ("conv1d", "linear"):
                raise ShapeError(
                    "batchnorm1d not preceded by conv1d/linear cannot be folded")
            fold_into(new_layers[-1], layer)
            continue
        layer = copy.deepcopy(layer)
        ls = copy.deepcopy(ls)
        if ls.kind == "residual-block" and ls.batchnorm:
            fold_into(layer.conv1, layer.bn1)
            fold_into(layer.conv2, layer.bn2)
            if layer.proj is not None:
                fold_into(layer.proj, layer.proj_bn)
            layer.bn1 = layer.bn2 = layer.proj_bn = None
            layer.batchnorm = False
            ls.batchnorm = False
        new_layers.append(layer)
        new_specs.append(ls)
    return TrainedModel(spec=ModelSpec(new_specs, model.spec.head, model.spec.output_dim),
                        layers=new_layers, seed=model.seed, folded=True,
                        input_length=model.input_length,
                        in_channels=model.in_channels, classes=list(model.classes))


# -- reference architectures -------------------------------------------


def lenet_spec(output_dim: int, head: str = "sigmoid-multilabel",
               in_channels: int = 12, channels: tuple[int, int, int] = (32, 64, 128),
               hidden: int = 64) -> ModelSpec:
    """Shallow 1-D CNN: three conv(k5, s2)+BN+ReLU stages, max/max/global-avg
    pooling, then two dense layers."""
    c1, c2, c3 = channels
    ls: list[LayerSpec] = []
    for cin, cout, pool in ((in_channels, c1, "maxpool1d"),
                            (c1, c2, "maxpool1d"),
                            (c2, c3, None)):
        ls.append(LayerSpec("conv1d", in_channels=cin, out_channels=cout,
                            kernel=5, stride=2))
        ls.append(LayerSpec("batchnorm1d", in_channels=cout))
        ls.append(LayerSpec("relu"))
        if pool:
            ls.append(LayerSpec(pool, window=2))
    ls.append(LayerSpec("globalavgpool"))
    ls.append(LayerSpec("linear", in_features=c3, out_features=hidden))
    ls.append(LayerSpec("relu"))
    ls.append(LayerSpec("linear", in_features=hidden, out_features=output_dim))
    return ModelSpec(layers=ls, head=head, output_dim=output_dim)


def resnet_spec(output_dim: int, head: str = "sigmoid-multilabel",
                in_channels: int = 12, width: int = 32) -> ModelSpec:
    """Small 1-D residual net: strided conv stem plus four residual blocks."""
    w = width
    ls = [
        LayerSpec("conv1d", in_channels=in_channels, out_channels=w, kernel=5, stride=2),
        LayerSpec("batchnorm1d", in_channels=w),
        LayerSpec("relu"),
        LayerSpec("residual-block", in_channels=w, out_channels=w, kernel=3, stride=1),
        LayerSpec("residual-block", in_channels=w, out_channels=2 * w, kernel=3, stride=2),
        LayerSpec("residual-block", in_channels=2 * w, out_channels=2 * w, kernel=3, stride=1),
        LayerSpec("residual-block", in_channels=2 * w, out_channels=4 * w, kernel=3, stride=2),
        LayerSpec("globalavgpool"),
        LayerSpec("linear", in_features=4 * w, out_features=output_dim),
    ]
    return ModelSpec(layers=ls, head=head, output_dim=output_dim)


ARCHITECTURES = {"lenet": lenet_spec, "resnet1d": resnet_spec}
