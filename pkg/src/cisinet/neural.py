"""Multilayer perceptrons and their optimizer, shared by every method.

An MLP here is a plain container of float64 weight/bias arrays.  Inference
uses :func:`mlp_forward` directly on numpy arrays; training binds the same
arrays onto a tape with :func:`bind_mlp` and runs :func:`apply_mlp`, so both
paths share one set of parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tape as T
from .errors import ConfigError, ContractError, ShapeError

Array = np.ndarray


@dataclass
class MLPParams:
    """Per-layer weights/biases plus the hidden activation.

    ``dims`` chains input through hidden layers to the output; hidden layers
    apply the activation, the final layer is affine.
    """

    dims: list[int]
    weights: list[Array]
    biases: list[Array]
    activation: str = "leaky_relu"
    slope: float = 0.01

    def n_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def validate(self) -> None:
        if len(self.weights) != len(self.dims) - 1 or len(self.biases) != len(self.weights):
            raise ContractError("layer count does not match dims")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.dims[i], self.dims[i + 1]):
                raise ShapeError(
                    f"layer {i} weight shape {w.shape} != ({self.dims[i]}, {self.dims[i+1]})")
            if b.shape != (1, self.dims[i + 1]):
                raise ShapeError(f"layer {i} bias shape {b.shape} != (1, {self.dims[i+1]})")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ContractError(f"layer {i} has non-finite parameters")


def _gain(activation: str, slope: float) -> float:
    if activation == "relu":
        return np.sqrt(2.0)
    if activation == "leaky_relu":
        return np.sqrt(2.0 / (1.0 + slope * slope))
    raise ConfigError(f"unknown activation '{activation}'")


def init_mlp(dims, activation: str = "leaky_relu",
             seed: int | np.random.Generator = 0, slope: float = 0.01) -> MLPParams:
    """Kaiming-uniform weights matched to the activation gain, zero biases.

    Deterministic for a given seed.  The output layer is linear and gets
    gain 1.
    """
    dims = [int(d) for d in dims]
    if len(dims) < 2 or any(d <= 0 for d in dims):
        raise ConfigError(f"dims must have >=2 positive entries, got {dims}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    weights, biases = [], []
    n_layers = len(dims) - 1
    for i in range(n_layers):
        fan_in = dims[i]
        gain = 1.0 if i == n_layers - 1 else _gain(activation, slope)
        bound = gain * np.sqrt(3.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(dims[i], dims[i + 1])))
        biases.append(np.zeros((1, dims[i + 1])))
    return MLPParams(dims=dims, weights=weights, biases=biases,
                     activation=activation, slope=slope)


def mlp_forward(params: MLPParams, x: Array) -> Array:
    """Numpy inference pass: affine + activation per hidden layer, affine out."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.dims[0]:
        raise ShapeError(
            f"input shape {x.shape} incompatible with first dim {params.dims[0]}")
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if i < last:
            if params.activation == "relu":
                h = np.maximum(h, 0.0)
            else:
                h = np.where(h >= 0.0, h, params.slope * h)
    return h


@dataclass
class BoundMLP:
    """Tape handles for one MLP's parameters within a single step."""

    params: MLPParams
    layers: list[tuple[T.Node, T.Node]]

    def weight_nodes(self) -> list[T.Node]:
        return [w for w, _ in self.layers]

    def all_nodes(self) -> list[T.Node]:
        out = []
        for w, b in self.layers:
            out.extend((w, b))
        return out


def bind_mlp(tp: T.Tape, params: MLPParams, name: str = "mlp") -> BoundMLP:
    """Register every layer's arrays as parameter leaves on the tape."""
    layers = []
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        wn = tp.leaf(w, param=True, name=f"{name}.w{i}")
        bn = tp.leaf(b, param=True, name=f"{name}.b{i}")
        layers.append((wn, bn))
    return BoundMLP(params=params, layers=layers)


def apply_mlp(bound: BoundMLP, x: T.Node) -> T.Node:
    """Tape twin of :func:`mlp_forward` on bound parameters."""
    h = x
    last = len(bound.layers) - 1
    act = bound.params.activation
    slope = bound.params.slope
    for i, (w, b) in enumerate(bound.layers):
        h = T.bias_add(T.matmul(h, w), b)
        if i < last:
            h = T.activation(h, act, slope)
    return h


@dataclass
class AdamState:
    """First/second moment accumulators mirroring the parameter shapes."""

    m: list[Array]
    v: list[Array]
    t: int = 0
    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: list[Array], lr: float = 1e-5, beta1: float = 0.9,
                   beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params],
                   t=0, lr=lr, beta1=beta1, beta2=beta2, eps=eps)


def adam_step(params: list[Array], grads: list[Array], state: AdamState):
    """One bias-corrected Adam update, in place; returns (params, state)."""
    if len(params) != len(state.m) or len(grads) != len(params):
        raise ContractError("parameter/gradient/state lengths disagree")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ContractError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


def weight_decay_penalty(weight_nodes: list[T.Node], beta: float, tp: T.Tape) -> T.Node:
    """beta times the sum of squared weight entries (biases excluded)."""
    if beta < 0:
        raise ContractError(f"beta must be non-negative, got {beta}")
    total = tp.constant(0.0, name="wd_zero")
    if beta == 0.0 or not weight_nodes:
        return total
    for w in weight_nodes:
        sq = T.square(w)
        total = T.add(total, T.scale(T.mean(sq), float(sq.value.size)))
    return T.scale(total, beta)


def mlp_to_dict(params: MLPParams) -> dict:
    """JSON-ready form: dims, activation, row-major weight/bias arrays."""
    return {
        "dims": params.dims,
        "activation": params.activation,
        "slope": params.slope,
        "weights": [w.tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
    }


def mlp_from_dict(doc: dict) -> MLPParams:
    params = MLPParams(
        dims=[int(d) for d in doc["dims"]],
        weights=[np.asarray(w, dtype=np.float64) for w in doc["weights"]],
        biases=[np.asarray(b, dtype=np.float64) for b in doc["biases"]],
        activation=doc["activation"],
        slope=float(doc.get("slope", 0.01)),
    )
    params.validate()
    return params
