"""Layer implementations: forward, backward, and relevance propagation.

Temporal activations use the internal layout (batch, channels, time);
dense activations use (batch, features). Every forward returns a cache
from which the matching backward (vector-Jacobian product) and the
relevance-propagation pass are computed. All arrays are float64.

Relevance rules:
  * "eps"        -- stabilized proportional redistribution through every
                    affine/pooling layer; epsilons are sign-matched and
                    scaled to ``eps_scale * mean |preactivation|``.
  * "zplus-conv" -- positive-weight redistribution on convolutions only
                    (bias dropped), "eps" everywhere else.

Max pooling routes gradients and relevance to the argmax position, ties
broken by lowest index. Average pooling distributes uniformly.
"""

from __future__ import annotations

import numpy as np


def _stabilize(z: np.ndarray, eps_scale: float) -> np.ndarray:
    """Sign-matched denominator stabilization for relevance rules.

    The epsilon is scaled to each sample's own mean |preactivation| so
    that batched and per-sample propagation agree exactly.
    """
    axes = tuple(range(1, z.ndim))
    eps = eps_scale * np.mean(np.abs(z), axis=axes, keepdims=True)
    eps = np.where(eps == 0.0, eps_scale, eps)
    sign = np.where(z >= 0.0, 1.0, -1.0)
    return z + sign * eps


def conv_patches(x: np.ndarray, kernel: int, stride: int, padding: int) -> np.ndarray:
    """im2col view of (N, C, T) as (N, C*kernel, L) with L output steps."""
    if padding > 0:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding)))
    n, c, t = x.shape
    length = (t - kernel) // stride + 1
    s0, s1, s2 = x.strides
    windows = np.lib.stride_tricks.as_strided(
        x, (n, c, length, kernel), (s0, s1, s2 * stride, s2), writeable=False
    )
    return windows.transpose(0, 1, 3, 2).reshape(n, c * kernel, length)


def _col2im(gp: np.ndarray, shape: tuple[int, int, int], kernel: int, stride: int,
            padding: int) -> np.ndarray:
    """Adjoint of `conv_patches`: scatter (N, C*kernel, L) back to (N, C, T)."""
    n, c, t = shape
    gx = np.zeros((n, c, t + 2 * padding))
    length = gp.shape[2]
    gp = gp.reshape(n, c, kernel, length)
    for i in range(kernel):
        gx[:, :, i : i + stride * length : stride] += gp[:, :, i, :]
    if padding > 0:
        gx = gx[:, :, padding : padding + t]
    return gx


class Conv1d:
    kind = "conv1d"

    def __init__(self, in_channels: int, out_channels: int, kernel: int,
                 stride: int = 1, padding: int = 0, bias: bool = True):
        if kernel < 1 or stride < 1:
            raise ValueError("conv1d needs kernel >= 1 and stride >= 1")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.padding = padding
        self.has_bias = bias
        self.weight = np.zeros((out_channels, in_channels, kernel))
        self.bias = np.zeros(out_channels) if bias else None

    def init_params(self, rng: np.random.Generator) -> None:
        fan_in = self.in_channels * self.kernel
        self.weight = rng.normal(0.0, np.sqrt(2.0 / fan_in), self.weight.shape)

    def params(self) -> dict[str, np.ndarray]:
        out = {"weight": self.weight}
        if self.has_bias:
            out["bias"] = self.bias
        return out

    def out_length(self, t: int) -> int:
        return (t + 2 * self.padding - self.kernel) // self.stride + 1

    def forward(self, x, train=False):
        patches = conv_patches(x, self.kernel, self.stride, self.padding)
        w2 = self.weight.reshape(self.out_channels, -1)
        y = np.matmul(w2, patches)
        if self.has_bias:
            y = y + self.bias[:, None]
        return y, {"x_shape": x.shape, "patches": patches}

    def backward(self, cache, gy):
        patches = cache["patches"]
        w2 = self.weight.reshape(self.out_channels, -1)
        grads = {"weight": np.einsum("nfl,nkl->fk", gy, patches).reshape(self.weight.shape)}
        if self.has_bias:
            grads["bias"] = gy.sum(axis=(0, 2))
        gp = np.matmul(w2.T, gy)
        gx = _col2im(gp, cache["x_shape"], self.kernel, self.stride, self.padding)
        return gx, grads

    def relevance(self, cache, rel, rule, eps_scale):
        patches = cache["patches"]
        if rule == "zplus-conv":
            w2 = np.maximum(self.weight, 0.0).reshape(self.out_channels, -1)
            z = np.matmul(w2, patches)
        else:
            w2 = self.weight.reshape(self.out_channels, -1)
            z = np.matmul(w2, patches)
            if self.has_bias:
                z = z + self.bias[:, None]
        s = rel / _stabilize(z, eps_scale)
        gp = np.matmul(w2.T, s) * patches
        return _col2im(gp, cache["x_shape"], self.kernel, self.stride, self.padding)


class Linear:
    kind = "linear"

    def __init__(self, in_features: int, out_features: int, bias: bool = True):
        self.in_features = in_features
        self.out_features = out_features
        self.has_bias = bias
        self.weight = np.zeros((out_features, in_features))
        self.bias = np.zeros(out_features) if bias else None

    def init_params(self, rng):
        self.weight = rng.normal(0.0, np.sqrt(2.0 / self.in_features), self.weight.shape)

    def params(self):
        out = {"weight": self.weight}
        if self.has_bias:
            out["bias"] = self.bias
        return out

    def forward(self, x, train=False):
        y = x @ self.weight.T
        if self.has_bias:
            y = y + self.bias
        return y, {"x": x}

    def backward(self, cache, gy):
        grads = {"weight": gy.T @ cache["x"]}
        if self.has_bias:
            grads["bias"] = gy.sum(axis=0)
        return gy @ self.weight, grads

    def relevance(self, cache, rel, rule, eps_scale):
        x = cache["x"]
        z = x @ self.weight.T
        if self.has_bias:
            z = z + self.bias
        s = rel / _stabilize(z, eps_scale)
        return (s @ self.weight) * x


class BatchNorm1d:
    kind = "batchnorm1d"

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.gamma = np.ones(channels)
        self.beta = np.zeros(channels)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)

    def init_params(self, rng):
        pass

    def params(self):
        return {
            "gamma": self.gamma,
            "beta": self.beta,
            "running_mean": self.running_mean,
            "running_var": self.running_var,
        }

    def trainable(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def forward(self, x, train=False):
        if train:
            mean = x.mean(axis=(0, 2))
            var = x.var(axis=(0, 2))
            self.running_mean = (1 - self.momentum) * self.running_mean + self.momentum * mean
            self.running_var = (1 - self.momentum) * self.running_var + self.momentum * var
        else:
            mean, var = self.running_mean, self.running_var
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean[:, None]) * inv[:, None]
        y = self.gamma[:, None] * xhat + self.beta[:, None]
        return y, {"xhat": xhat, "inv": inv, "train": train}

    def backward(self, cache, gy):
        xhat, inv = cache["xhat"], cache["inv"]
        grads = {"gamma": (gy * xhat).sum(axis=(0, 2)), "beta": gy.sum(axis=(0, 2))}
        if cache["train"]:
            n = gy.shape[0] * gy.shape[2]
            gxhat = gy * self.gamma[:, None]
            term = gxhat - gxhat.mean(axis=(0, 2), keepdims=True) \
                - xhat * (gxhat * xhat).mean(axis=(0, 2), keepdims=True)
            gx = term * inv[:, None]
        else:
            gx = gy * (self.gamma * inv)[:, None]
        return gx, grads

    def relevance(self, cache, rel, rule, eps_scale):
        # only reached on unfolded models, which the lrp entry point rejects
        raise RuntimeError("relevance through batchnorm requires folding first")


class ReLU:
    kind = "relu"

    def init_params(self, rng):
        pass

    def params(self):
        return {}

    def forward(self, x, train=False):
        mask = x > 0.0
        return x * mask, {"mask": mask}

    def backward(self, cache, gy):
        return gy * cache["mask"], {}

    def relevance(self, cache, rel, rule, eps_scale):
        return rel


class MaxPool1d:
    kind = "maxpool1d"

    def __init__(self, window: int):
        self.window = window

    def init_params(self, rng):
        pass

    def params(self):
        return {}

    def out_length(self, t: int) -> int:
        return t // self.window

    def forward(self, x, train=False):
        n, c, t = x.shape
        length = t // self.window
        xr = x[:, :, : length * self.window].reshape(n, c, length, self.window)
        am = xr.argmax(axis=3)  # first max wins on ties
        y = np.take_along_axis(xr, am[..., None], axis=3)[..., 0]
        return y, {"x_shape": x.shape, "argmax": am}

    def _scatter(self, cache, values):
        n, c, t = cache["x_shape"]
        length = cache["argmax"].shape[2]
        gx = np.zeros((n, c, t))
        gr = gx[:, :, : length * self.window].reshape(n, c, length, self.window)
        np.put_along_axis(gr, cache["argmax"][..., None], values[..., None], axis=3)
        return gx

    def backward(self, cache, gy):
        return self._scatter(cache, gy), {}

    def relevance(self, cache, rel, rule, eps_scale):
        return self._scatter(cache, rel)


class AvgPool1d:
    kind = "avgpool1d"

    def __init__(self, window: int):
        self.window = window

    def init_params(self, rng):
        pass

    def params(self):
        return {}

    def out_length(self, t: int) -> int:
        return t // self.window

    def forward(self, x, train=False):
        n, c, t = x.shape
        length = t // self.window
        xr = x[:, :, : length * self.window].reshape(n, c, length, self.window)
        return xr.mean(axis=3), {"x_shape": x.shape, "x": x}

    def backward(self, cache, gy):
        n, c, t = cache["x_shape"]
        length = gy.shape[2]
        gx = np.zeros((n, c, t))
        gx[:, :, : length * self.window] = np.repeat(gy / self.window, self.window, axis=2)
        return gx, {}

    def relevance(self, cache, rel, rule, eps_scale):
        x = cache["x"]
        n, c, t = x.shape
        length = rel.shape[2]
        xr = x[:, :, : length * self.window].reshape(n, c, length, self.window)
        z = xr.mean(axis=3)
        s = rel / _stabilize(z, eps_scale)
        contrib = xr * (s[..., None] / self.window)
        gx = np.zeros((n, c, t))
        gx[:, :, : length * self.window] = contrib.reshape(n, c, length * self.window)
        return gx


class GlobalAvgPool:
    kind = "globalavgpool"

    def init_params(self, rng):
        pass

    def params(self):
        return {}

    def forward(self, x, train=False):
        return x.mean(axis=2), {"x_shape": x.shape, "x": x}

    def backward(self, cache, gy):
        n, c, t = cache["x_shape"]
        return np.broadcast_to(gy[:, :, None] / t, (n, c, t)).copy(), {}

    def relevance(self, cache, rel, rule, eps_scale):
        x = cache["x"]
        t = x.shape[2]
        z = x.mean(axis=2)
        s = rel / _stabilize(z, eps_scale)
        return x * (s[:, :, None] / t)


class ResidualBlock:
    """conv-BN-ReLU-conv-BN on the main path plus a (projected) skip.

    Kernel 3 with symmetric padding keeps main and skip lengths aligned for
    any stride. A 1x1 strided projection (with its own BN) is inserted when
    channels or stride change. The `batchnorm` flag is cleared by folding.
    """

    kind = "residual-block"

    def __init__(self, in_channels: int, out_channels: int, stride: int = 1,
                 kernel: int = 3, batchnorm: bool = True):
        if kernel % 2 != 1:
            raise ValueError("residual block kernel must be odd")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.stride = stride
        self.kernel = kernel
        self.batchnorm = batchnorm
        pad = kernel // 2
        self.conv1 = Conv1d(in_channels, out_channels, kernel, stride, pad)
        self.conv2 = Conv1d(out_channels, out_channels, kernel, 1, pad)
        self.bn1 = BatchNorm1d(out_channels) if batchnorm else None
        self.bn2 = BatchNorm1d(out_channels) if batchnorm else None
        self.projects = (in_channels != out_channels) or (stride != 1)
        if self.projects:
            self.proj = Conv1d(in_channels, out_channels, 1, stride, 0)
            self.proj_bn = BatchNorm1d(out_channels) if batchnorm else None
        else:
            self.proj = None
            self.proj_bn = None

    def _sublayers(self):
        subs = {"conv1": self.conv1, "conv2": self.conv2}
        if self.bn1 is not None:
            subs["bn1"] = self.bn1
            subs["bn2"] = self.bn2
        if self.proj is not None:
            subs["proj"] = self.proj
            if self.proj_bn is not None:
                subs["proj_bn"] = self.proj_bn
        return subs

    def init_params(self, rng):
        self.conv1.init_params(rng)
        self.conv2.init_params(rng)
        if self.proj is not None:
            self.proj.init_params(rng)

    def params(self):
        out = {}
        for prefix, sub in self._sublayers().items():
            for name, arr in sub.params().items():
                out[f"{prefix}.{name}"] = arr
        return out

    def out_length(self, t: int) -> int:
        return self.conv1.out_length(t)

    def forward(self, x, train=False):
        cache = {"x": x}
        m, cache["conv1"] = self.conv1.forward(x, train)
        if self.bn1 is not None:
            m, cache["bn1"] = self.bn1.forward(m, train)
        mask1 = m > 0.0
        m = m * mask1
        cache["mask1"] = mask1
        m, cache["conv2"] = self.conv2.forward(m, train)
        if self.bn2 is not None:
            m, cache["bn2"] = self.bn2.forward(m, train)
        if self.proj is not None:
            sk, cache["proj"] = self.proj.forward(x, train)
            if self.proj_bn is not None:
                sk, cache["proj_bn"] = self.proj_bn.forward(sk, train)
        else:
            sk = x
        z = m + sk
        cache["main"] = m
        cache["skip"] = sk
        cache["mask_out"] = z > 0.0
        return z * cache["mask_out"], cache

    def backward(self, cache, gy):
        grads = {}
        gz = gy * cache["mask_out"]
        gm = gz
        if self.bn2 is not None:
            gm, g = self.bn2.backward(cache["bn2"], gm)
            grads.update({f"bn2.{k}": v for k, v in g.items()})
        gm, g = self.conv2.backward(cache["conv2"], gm)
        grads.update({f"conv2.{k}": v for k, v in g.items()})
        gm = gm * cache["mask1"]
        if self.bn1 is not None:
            gm, g = self.bn1.backward(cache["bn1"], gm)
            grads.update({f"bn1.{k}": v for k, v in g.items()})
        gx_main, g = self.conv1.backward(cache["conv1"], gm)
        grads.update({f"conv1.{k}": v for k, v in g.items()})
        if self.proj is not None:
            gs = gz
            if self.proj_bn is not None:
                gs, g = self.proj_bn.backward(cache["proj_bn"], gs)
                grads.update({f"proj_bn.{k}": v for k, v in g.items()})
            gx_skip, g = self.proj.backward(cache["proj"], gs)
            grads.update({f"proj.{k}": v for k, v in g.items()})
        else:
            gx_skip = gz
        return gx_main + gx_skip, grads

    def relevance(self, cache, rel, rule, eps_scale):
        if self.batchnorm:
            raise RuntimeError("relevance through batchnorm requires folding first")
        # split at the addition proportionally to each branch's contribution
        total = _stabilize(cache["main"] + cache["skip"], eps_scale)
        r_main = rel * cache["main"] / total
        r_skip = rel * cache["skip"] / total
        r_main = self.conv2.relevance(cache["conv2"], r_main, rule, eps_scale)
        r_main = self.conv1.relevance(cache["conv1"], r_main, rule, eps_scale)
        if self.proj is not None:
            r_skip = self.proj.relevance(cache["proj"], r_skip, rule, eps_scale)
        return r_main + r_skip
