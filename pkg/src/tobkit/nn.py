"""Minimal dense-tensor neural engine: feedforward chains with exact
reverse-mode gradients, binary cross-entropy, and Adam.

Built for two small networks (a six-layer spectral transcoder and a
toy frozen classifier), so there is no general autodiff graph: a
Network is an ordered layer chain, forward caches activations, and
backward walks the chain in reverse. Training math is float64
throughout so finite-difference checks are meaningful.
"""

from __future__ import annotations

import hashlib
from typing import Iterable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

LAYER_KINDS = (
    "conv2d",
    "relu",
    "sigmoid",
    "maxpool2d",
    "avgpool_global",
    "dense",
    "upsample2d",
)


class Param:
    """Named weight buffer with an optional gradient slot."""

    __slots__ = ("name", "value", "grad", "trainable")

    def __init__(self, name: str, value: np.ndarray, trainable: bool = True):
        self.name = name
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.trainable = trainable

    def zero_grad(self) -> None:
        self.grad = None


class Layer:
    kind: str = "?"

    def spec(self) -> dict:
        raise NotImplementedError

    def params(self) -> list[Param]:
        return []

    def forward(self, x: np.ndarray, retain: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, gy: np.ndarray) -> np.ndarray:
        raise NotImplementedError


def _he_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)


class Conv2d(Layer):
    """2-D convolution (cross-correlation), NCHW layout."""

    kind = "conv2d"

    def __init__(
        self,
        c_in: int,
        c_out: int,
        kernel: tuple[int, int] = (3, 3),
        stride: tuple[int, int] = (1, 1),
        padding: tuple[int, int] = (0, 0),
        name: str = "conv",
        rng: np.random.Generator | None = None,
    ):
        self.c_in, self.c_out = c_in, c_out
        self.kernel, self.stride, self.padding = tuple(kernel), tuple(stride), tuple(padding)
        kh, kw = self.kernel
        rng = rng or np.random.default_rng(0)
        self.weight = Param(f"{name}.weight", _he_init(rng, (c_out, c_in, kh, kw), c_in * kh * kw))
        self.bias = Param(f"{name}.bias", np.zeros(c_out))
        self._cache = None

    def spec(self) -> dict:
        return {
            "kind": self.kind,
            "c_in": self.c_in,
            "c_out": self.c_out,
            "kernel": list(self.kernel),
            "stride": list(self.stride),
            "padding": list(self.padding),
        }

    def params(self) -> list[Param]:
        return [self.weight, self.bias]

    def _im2col(self, x: np.ndarray) -> tuple[np.ndarray, tuple[int, int]]:
        kh, kw = self.kernel
        sh, sw = self.stride
        ph, pw = self.padding
        xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
        windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
        n, c, ho, wo = windows.shape[:4]
        cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n, ho * wo, c * kh * kw)
        return cols, (ho, wo)

    def forward(self, x: np.ndarray, retain: bool = False) -> np.ndarray:
        if x.ndim != 4 or x.shape[1] != self.c_in:
            raise ValueError(f"conv2d expects (N,{self.c_in},H,W), got {x.shape}")
        cols, (ho, wo) = self._im2col(x)
        wmat = self.weight.value.reshape(self.c_out, -1)
        y = cols @ wmat.T + self.bias.value
        y = y.reshape(x.shape[0], ho, wo, self.c_out).transpose(0, 3, 1, 2)
        if retain:
            self._cache = (cols, x.shape, (ho, wo))
        return y

    def backward(self, gy: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise RuntimeError("backward before forward(retain=True)")
        cols, x_shape, (ho, wo) = self._cache
        n = x_shape[0]
        gflat = gy.transpose(0, 2, 3, 1).reshape(n, ho * wo, self.c_out)
        if self.weight.trainable:
            dw = np.einsum("npc,npk->ck", gflat, cols).reshape(self.weight.value.shape)
            self.weight.grad = dw if self.weight.grad is None else self.weight.grad + dw
            db = gflat.sum(axis=(0, 1))
            self.bias.grad = db if self.bias.grad is None else self.bias.grad + db
        wmat = self.weight.value.reshape(self.c_out, -1)
        dcols = gflat @ wmat  # (N, Ho*Wo, C*kh*kw)
        kh, kw = self.kernel
        sh, sw = self.stride
        ph, pw = self.padding
        _, c, h, w = x_shape
        dcols = dcols.reshape(n, ho, wo, c, kh, kw)
        dxp = np.zeros((n, c, h + 2 * ph, w + 2 * pw))
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i : i + sh * ho : sh, j : j + sw * wo : sw] += dcols[
                    :, :, :, :, i, j
                ].transpose(0, 3, 1, 2)
        return dxp[:, :, ph : ph + h, pw : pw + w]


class ReLU(Layer):
    kind = "relu"

    def __init__(self):
        self._mask = None

    def spec(self) -> dict:
        return {"kind": self.kind}

    def forward(self, x: np.ndarray, retain: bool = False) -> np.ndarray:
        if retain:
            self._mask = x > 0
        return np.maximum(x, 0.0)

    def backward(self, gy: np.ndarray) -> np.ndarray:
        return gy * self._mask


class Sigmoid(Layer):
    kind = "sigmoid"

    def __init__(self):
        self._y = None

    def spec(self) -> dict:
        return {"kind": self.kind}

    def forward(self, x: np.ndarray, retain: bool = False) -> np.ndarray:
        y = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
        if retain:
            self._y = y
        return y

    def backward(self, gy: np.ndarray) -> np.ndarray:
        return gy * self._y * (1.0 - self._y)


class MaxPool2d(Layer):
    """Non-overlapping max pooling; trailing rows/cols that do not fill a
    window are cropped."""

    kind = "maxpool2d"

    def __init__(self, kernel: tuple[int, int] = (2, 2)):
        self.kernel = tuple(kernel)
        self._cache = None

    def spec(self) -> dict:
        return {"kind": self.kind, "kernel": list(self.kernel)}

    def forward(self, x: np.ndarray, retain: bool = False) -> np.ndarray:
        kh, kw = self.kernel
        n, c, h, w = x.shape
        ho, wo = h // kh, w // kw
        if ho < 1 or wo < 1:
            raise ValueError(f"maxpool2d {self.kernel} on too-small input {x.shape}")
        xc = x[:, :, : ho * kh, : wo * kw]
        blocks = xc.reshape(n, c, ho, kh, wo, kw).transpose(0, 1, 2, 4, 3, 5)
        flat = blocks.reshape(n, c, ho, wo, kh * kw)
        idx = flat.argmax(axis=-1)
        y = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
        if retain:
            self._cache = (idx, x.shape)
        return y

    def backward(self, gy: np.ndarray) -> np.ndarray:
        idx, x_shape = self._cache
        kh, kw = self.kernel
        n, c, h, w = x_shape
        ho, wo = h // kh, w // kw
        flat = np.zeros((n, c, ho, wo, kh * kw))
        np.put_along_axis(flat, idx[..., None], gy[..., None], axis=-1)
        dxc = flat.reshape(n, c, ho, wo, kh, kw).transpose(0, 1, 2, 4, 3, 5)
        dx = np.zeros(x_shape)
        dx[:, :, : ho * kh, : wo * kw] = dxc.reshape(n, c, ho * kh, wo * kw)
        return dx


class GlobalAvgPool(Layer):
    kind = "avgpool_global"

    def __init__(self):
        self._shape = None

    def spec(self) -> dict:
        return {"kind": self.kind}

    def forward(self, x: np.ndarray, retain: bool = False) -> np.ndarray:
        if retain:
            self._shape = x.shape
        return x.mean(axis=(2, 3))

    def backward(self, gy: np.ndarray) -> np.ndarray:
        n, c, h, w = self._shape
        return np.broadcast_to(gy[:, :, None, None], self._shape) / (h * w)


class Dense(Layer):
    kind = "dense"

    def __init__(
        self,
        d_in: int,
        d_out: int,
        name: str = "dense",
        rng: np.random.Generator | None = None,
    ):
        self.d_in, self.d_out = d_in, d_out
        rng = rng or np.random.default_rng(0)
        self.weight = Param(f"{name}.weight", _he_init(rng, (d_out, d_in), d_in))
        self.bias = Param(f"{name}.bias", np.zeros(d_out))
        self._x = None

    def spec(self) -> dict:
        return {"kind": self.kind, "d_in": self.d_in, "d_out": self.d_out}

    def params(self) -> list[Param]:
        return [self.weight, self.bias]

    def forward(self, x: np.ndarray, retain: bool = False) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.d_in:
            raise ValueError(f"dense expects (N,{self.d_in}), got {x.shape}")
        if retain:
            self._x = x
        return x @ self.weight.value.T + self.bias.value

    def backward(self, gy: np.ndarray) -> np.ndarray:
        if self.weight.trainable:
            dw = gy.T @ self._x
            self.weight.grad = dw if self.weight.grad is None else self.weight.grad + dw
            db = gy.sum(axis=0)
            self.bias.grad = db if self.bias.grad is None else self.bias.grad + db
        return gy @ self.weight.value


def _interp_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Endpoint-aligned linear interpolation weights, rows sum to 1."""
    m = np.zeros((n_out, n_in))
    if n_out == 1 or n_in == 1:
        m[:, 0] = 1.0
        return m
    pos = np.arange(n_out) * (n_in - 1) / (n_out - 1)
    lo = np.floor(pos).astype(np.int64)
    lo = np.minimum(lo, n_in - 2)
    frac = pos - lo
    m[np.arange(n_out), lo] = 1.0 - frac
    m[np.arange(n_out), lo + 1] += frac
    return m


class Upsample2d(Layer):
    """Upsampling along H/W. Nearest mode repeats by integer factors;
    linear mode resamples the W (time) axis by a rational ratio."""

    kind = "upsample2d"

    def __init__(
        self,
        scale: tuple[int, int] = (1, 2),
        mode: str = "nearest",
        ratio: tuple[int, int] | None = None,
    ):
        if mode not in ("nearest", "linear"):
            raise ValueError(f"unknown upsample mode {mode!r}")
        if mode == "linear" and ratio is None:
            raise ValueError("linear mode needs a (num, den) ratio")
        self.scale = tuple(scale)
        self.mode = mode
        self.ratio = tuple(ratio) if ratio else None
        self._cache = None

    def spec(self) -> dict:
        out = {"kind": self.kind, "mode": self.mode, "scale": list(self.scale)}
        if self.ratio:
            out["ratio"] = list(self.ratio)
        return out

    def forward(self, x: np.ndarray, retain: bool = False) -> np.ndarray:
        if self.mode == "nearest":
            sh, sw = self.scale
            if retain:
                self._cache = x.shape
            return x.repeat(sh, axis=2).repeat(sw, axis=3)
        num, den = self.ratio
        w_in = x.shape[3]
        w_out = w_in * num // den
        m = _interp_matrix(w_in, w_out)
        if retain:
            self._cache = m
        return x @ m.T

    def backward(self, gy: np.ndarray) -> np.ndarray:
        if self.mode == "nearest":
            sh, sw = self.scale
            n, c, h, w = self._cache
            return gy.reshape(n, c, h, sh, w, sw).sum(axis=(3, 5))
        return gy @ self._cache


def build_layer(spec: dict, rng: np.random.Generator | None = None, name: str = "layer") -> Layer:
    kind = spec["kind"]
    if kind == "conv2d":
        return Conv2d(
            spec["c_in"],
            spec["c_out"],
            kernel=tuple(spec["kernel"]),
            stride=tuple(spec.get("stride", (1, 1))),
            padding=tuple(spec.get("padding", (0, 0))),
            name=name,
            rng=rng,
        )
    if kind == "relu":
        return ReLU()
    if kind == "sigmoid":
        return Sigmoid()
    if kind == "maxpool2d":
        return MaxPool2d(kernel=tuple(spec["kernel"]))
    if kind == "avgpool_global":
        return GlobalAvgPool()
    if kind == "dense":
        return Dense(spec["d_in"], spec["d_out"], name=name, rng=rng)
    if kind == "upsample2d":
        return Upsample2d(
            scale=tuple(spec.get("scale", (1, 1))),
            mode=spec.get("mode", "nearest"),
            ratio=tuple(spec["ratio"]) if "ratio" in spec else None,
        )
    raise ValueError(f"unknown layer kind {kind!r}")


class Network:
    """Ordered feedforward chain. Single-owner while training; safe for
    concurrent read-only inference once frozen."""

    def __init__(self, layers: Iterable[Layer]):
        self.layers = list(layers)
        self._retained = False

    def params(self) -> list[Param]:
        return [p for layer in self.layers for p in layer.params()]

    def named_params(self) -> dict[str, Param]:
        return {p.name: p for p in self.params()}

    def forward(self, x: np.ndarray, retain: bool = False) -> np.ndarray:
        y = np.asarray(x, dtype=np.float64)
        for layer in self.layers:
            y = layer.forward(y, retain=retain)
        self._retained = retain
        return y

    def backward(self, gy: np.ndarray) -> np.ndarray:
        """Propagate loss gradient; accumulates grads on trainable params
        and returns the gradient with respect to the network input."""
        if not self._retained:
            raise RuntimeError("backward requires a prior forward(retain=True)")
        g = gy
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def zero_grads(self) -> None:
        for p in self.params():
            p.zero_grad()

    def set_trainable(self, trainable: bool) -> None:
        for p in self.params():
            p.trainable = trainable

    @property
    def frozen(self) -> bool:
        return all(not p.trainable for p in self.params())

    def param_fingerprint(self) -> str:
        digest = hashlib.sha256()
        for p in self.params():
            digest.update(p.name.encode())
            digest.update(np.ascontiguousarray(p.value).tobytes())
        return digest.hexdigest()

    def layer_specs(self) -> list[dict]:
        return [layer.spec() for layer in self.layers]


def bce_loss(
    pred: np.ndarray, target: np.ndarray, eps: float = 1e-7
) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy and its gradient w.r.t. pred.

    pred is clamped into [eps, 1-eps] before the logs; the returned
    gradient is the clamp subgradient (zero outside the clamp range).
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    p = np.clip(pred, eps, 1.0 - eps)
    loss = float(np.mean(-(target * np.log(p) + (1.0 - target) * np.log1p(-p))))
    inside = (pred > eps) & (pred < 1.0 - eps)
    grad = np.where(inside, (p - target) / (p * (1.0 - p)), 0.0) / pred.size
    return loss, grad


class AdamState:
    """First/second moment buffers keyed by parameter name."""

    def __init__(self):
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0


def adam_step(
    params: Iterable[Param],
    state: AdamState,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One Adam update with bias correction over trainable params with grads."""
    state.t += 1
    t = state.t
    for p in params:
        if not p.trainable or p.grad is None:
            continue
        m = state.m.setdefault(p.name, np.zeros_like(p.value))
        v = state.v.setdefault(p.name, np.zeros_like(p.value))
        m *= beta1
        m += (1.0 - beta1) * p.grad
        v *= beta2
        v += (1.0 - beta2) * p.grad * p.grad
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        p.value -= lr * m_hat / (np.sqrt(v_hat) + eps)
