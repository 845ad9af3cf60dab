"""Small feedforward classifiers with exact forward, VJP, and JVP evaluation.

Supported layers: dense, conv2d (stride 1, valid padding), and elementwise
activations (tanh, softplus, relu).  All derivatives are exact; relu uses
subgradient 0 at the kink.  Models serialize to a JSON document and
round-trip bit-exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import NonFiniteError, ShapeMismatchError, Tensor

ACTIVATIONS = ("tanh", "softplus", "relu")


def _softplus(x: np.ndarray) -> np.ndarray:
    # log(1+exp(x)) without overflow
    return np.logaddexp(0.0, x)


def _act(tag: str, x: np.ndarray) -> np.ndarray:
    if tag == "tanh":
        return np.tanh(x)
    if tag == "softplus":
        return _softplus(x)
    if tag == "relu":
        return np.maximum(x, 0.0)
    raise ValueError(f"unknown activation {tag!r}")


def _act_deriv(tag: str, x: np.ndarray) -> np.ndarray:
    if tag == "tanh":
        t = np.tanh(x)
        return 1.0 - t * t
    if tag == "softplus":
        return 1.0 / (1.0 + np.exp(-x))
    if tag == "relu":
        return (x > 0.0).astype(np.float64)
    raise ValueError(f"unknown activation {tag!r}")


@dataclass(frozen=True)
class LayerSpec:
    """One layer: kind in {dense, conv2d, activation}."""

    kind: str
    weights: Optional[Tensor] = None
    bias: Optional[Tensor] = None
    activation: Optional[str] = None

    def __post_init__(self):
        if self.kind == "dense":
            if self.weights is None or len(self.weights.shape) != 2:
                raise ValueError("dense layer needs a 2-D weight tensor")
        elif self.kind == "conv2d":
            if self.weights is None or len(self.weights.shape) != 4:
                raise ValueError("conv2d layer needs a 4-D weight tensor")
        elif self.kind == "activation":
            if self.activation not in ACTIVATIONS:
                raise ValueError(f"unknown activation {self.activation!r}")
        else:
            raise ValueError(f"unknown layer kind {self.kind!r}")


@dataclass(frozen=True)
class PredictiveState:
    """Logits and the softmax predictive distribution at one input."""

    logits: Tensor
    probs: Tensor


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits)
    e = np.exp(z)
    return e / np.sum(e)


def _conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    # x: (C_in, H, W); w: (C_out, C_in, kh, kw); valid padding, stride 1
    kh, kw = w.shape[2], w.shape[3]
    windows = sliding_window_view(x, (kh, kw), axis=(1, 2))
    out = np.einsum("oikl,ihwkl->ohw", w, windows)
    return out + b[:, None, None]


def _conv2d_input_grad(g: np.ndarray, w: np.ndarray) -> np.ndarray:
    # g: (C_out, H', W'); returns (C_in, H, W) via full correlation with
    # the spatially flipped kernel
    kh, kw = w.shape[2], w.shape[3]
    gp = np.pad(g, ((0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
    windows = sliding_window_view(gp, (kh, kw), axis=(1, 2))
    wf = w[:, :, ::-1, ::-1]
    return np.einsum("oikl,ohwkl->ihw", wf, windows)


class ModelGraph:
    """Feedforward classifier F: R^n -> R^C, immutable after construction."""

    def __init__(self, layers: Sequence[LayerSpec], input_shape: Sequence[int],
                 class_count: int):
        if class_count < 2:
            raise ValueError("class_count must be >= 2")
        self.layers: List[LayerSpec] = list(layers)
        self.input_shape = tuple(int(s) for s in input_shape)
        self.class_count = int(class_count)
        # Validate layer shape chaining once, up front.
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            shape = self._output_shape(layer, shape, i)
        if shape != (self.class_count,):
            raise ValueError(
                f"final layer produces shape {shape}, expected ({self.class_count},)"
            )

    @staticmethod
    def _output_shape(layer: LayerSpec, shape: tuple, idx: int) -> tuple:
        if layer.kind == "dense":
            out_dim, in_dim = layer.weights.shape
            if int(np.prod(shape)) != in_dim:
                raise ValueError(
                    f"layer {idx}: dense expects {in_dim} inputs, got shape {shape}"
                )
            return (out_dim,)
        if layer.kind == "conv2d":
            c_out, c_in, kh, kw = layer.weights.shape
            if len(shape) != 3 or shape[0] != c_in:
                raise ValueError(
                    f"layer {idx}: conv2d expects (C={c_in},H,W), got {shape}"
                )
            h, w = shape[1] - kh + 1, shape[2] - kw + 1
            if h <= 0 or w <= 0:
                raise ValueError(f"layer {idx}: kernel larger than input")
            return (c_out, h, w)
        return shape  # activation

    def _check_input(self, x: Tensor) -> np.ndarray:
        if x.shape != self.input_shape:
            raise ShapeMismatchError(
                f"input shape {x.shape} != model input shape {self.input_shape}"
            )
        return x.array

    def _trace(self, x: np.ndarray):
        """Forward pass recording each layer's input (for VJP/JVP)."""
        inputs = []
        a = x
        for layer in self.layers:
            inputs.append(a)
            if layer.kind == "dense":
                a = layer.weights.array @ a.reshape(-1)
                if layer.bias is not None:
                    a = a + layer.bias.data
            elif layer.kind == "conv2d":
                bias = (layer.bias.data if layer.bias is not None
                        else np.zeros(layer.weights.shape[0]))
                a = _conv2d_forward(a, layer.weights.array, bias)
            else:
                a = _act(layer.activation, a)
        return a.reshape(-1), inputs

    def logits(self, x: Tensor) -> Tensor:
        out, _ = self._trace(self._check_input(x))
        return Tensor((self.class_count,), out)

    def forward(self, x: Tensor) -> PredictiveState:
        out, _ = self._trace(self._check_input(x))
        if not np.all(np.isfinite(out)):
            raise NonFiniteError("non-finite logits in forward pass")
        p = softmax(out)
        return PredictiveState(logits=Tensor((self.class_count,), out),
                               probs=Tensor((self.class_count,), p))

    def vjp(self, x: Tensor, u: Tensor) -> Tensor:
        """J_F(x)^T u, reverse-mode."""
        xa = self._check_input(x)
        if u.shape != (self.class_count,):
            raise ShapeMismatchError(f"cotangent shape {u.shape} != ({self.class_count},)")
        _, inputs = self._trace(xa)
        g = u.data.copy()
        for layer, a in zip(reversed(self.layers), reversed(inputs)):
            if layer.kind == "dense":
                g = (layer.weights.array.T @ g.reshape(-1)).reshape(a.shape)
            elif layer.kind == "conv2d":
                c_out, _, kh, kw = layer.weights.shape
                h = a.shape[1] - kh + 1
                w = a.shape[2] - kw + 1
                g = _conv2d_input_grad(g.reshape(c_out, h, w), layer.weights.array)
            else:
                g = g * _act_deriv(layer.activation, a)
        return Tensor(self.input_shape, g.reshape(-1))

    def jvp(self, x: Tensor, v: Tensor) -> Tensor:
        """J_F(x) v, forward-mode tangent propagation."""
        xa = self._check_input(x)
        if v.shape != self.input_shape:
            raise ShapeMismatchError(f"tangent shape {v.shape} != {self.input_shape}")
        a = xa
        t = v.array
        for layer in self.layers:
            if layer.kind == "dense":
                t = layer.weights.array @ t.reshape(-1)
                a_next = layer.weights.array @ a.reshape(-1)
                if layer.bias is not None:
                    a_next = a_next + layer.bias.data
                a = a_next
            elif layer.kind == "conv2d":
                bias = (layer.bias.data if layer.bias is not None
                        else np.zeros(layer.weights.shape[0]))
                t = _conv2d_forward(t, layer.weights.array, np.zeros(layer.weights.shape[0]))
                a = _conv2d_forward(a, layer.weights.array, bias)
            else:
                t = t * _act_deriv(layer.activation, a)
                a = _act(layer.activation, a)
        return Tensor((self.class_count,), t.reshape(-1))

    def grad_score(self, x: Tensor, t: int, score_target: str = "logit") -> Tensor:
        """Gradient of the target score: the t-th logit or softmax probability."""
        if not 0 <= t < self.class_count:
            raise ValueError(f"class index {t} out of range [0, {self.class_count})")
        if score_target == "logit":
            u = np.zeros(self.class_count)
            u[t] = 1.0
            return self.vjp(x, Tensor((self.class_count,), u))
        if score_target == "probability":
            p = self.forward(x).probs.data
            u = -p[t] * p
            u[t] += p[t]
            return self.vjp(x, Tensor((self.class_count,), u))
        raise ValueError(f"unknown score_target {score_target!r}")

    def score(self, x: Tensor, t: int, score_target: str = "logit") -> float:
        state = self.forward(x)
        if score_target == "logit":
            return float(state.logits.data[t])
        if score_target == "probability":
            return float(state.probs.data[t])
        raise ValueError(f"unknown score_target {score_target!r}")

    # -- serialization ----------------------------------------------------

    def to_json_dict(self) -> dict:
        layers = []
        for layer in self.layers:
            doc = {"kind": layer.kind}
            if layer.weights is not None:
                doc["weights"] = layer.weights.data.tolist()
                doc["weight_shape"] = list(layer.weights.shape)
            if layer.bias is not None:
                doc["bias"] = layer.bias.data.tolist()
            if layer.activation is not None:
                doc["activation"] = layer.activation
            layers.append(doc)
        return {
            "input_shape": list(self.input_shape),
            "class_count": self.class_count,
            "layers": layers,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ModelGraph":
        layers = []
        for ld in doc["layers"]:
            weights = bias = None
            if "weights" in ld:
                weights = Tensor(ld["weight_shape"], ld["weights"])
            if "bias" in ld:
                bias = Tensor((len(ld["bias"]),), ld["bias"])
            layers.append(LayerSpec(kind=ld["kind"], weights=weights, bias=bias,
                                    activation=ld.get("activation")))
        return cls(layers, doc["input_shape"], doc["class_count"])

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh)

    @classmethod
    def load(cls, path) -> "ModelGraph":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))
