"""Feed-forward scoring network with hand-derived gradients.

The network maps a feature vector (an utterance embedding, or a synthetic
stand-in) to an unnormalised scalar severity score.  Hidden layers use a
``tanh`` nonlinearity and the output layer is linear, so there is no clamping
on the score.  Weights are stored ``(fan_out, fan_in)``; a layer computes
``W @ x + b``.

Only this fixed architecture family is supported, which is why gradients
are derived by hand instead of through an autodiff engine.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ACTIVATIONS = ("tanh", "identity")


@dataclass
class ScoringModel:
    """Parameters of a multilayer perceptron ``D -> ... -> n_outputs``.

    ``layer_dims`` lists the input dimension, the hidden widths and the
    output width.  Scoring models have a single output; the NRRank baseline
    reuses the class with ``K`` outputs.
    """

    layer_dims: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "tanh"

    def __post_init__(self) -> None:
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        if len(self.layer_dims) < 2 or any(d < 1 for d in self.layer_dims):
            raise ValueError(f"invalid layer_dims {self.layer_dims}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        n_layers = len(self.layer_dims) - 1
        if len(self.weights) != n_layers or len(self.biases) != n_layers:
            raise ValueError("weights/biases do not match layer_dims")
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            expected = (self.layer_dims[k + 1], self.layer_dims[k])
            if w.shape != expected or b.shape != (expected[0],):
                raise ValueError(
                    f"layer {k}: weight {w.shape} / bias {b.shape}, expected {expected}"
                )

    @classmethod
    def zeros(cls, layer_dims: Sequence[int], activation: str = "tanh") -> "ScoringModel":
        dims = tuple(int(d) for d in layer_dims)
        weights = [np.zeros((dims[k + 1], dims[k])) for k in range(len(dims) - 1)]
        biases = [np.zeros(dims[k + 1]) for k in range(len(dims) - 1)]
        return cls(dims, weights, biases, activation)

    @classmethod
    def initialize(
        cls, layer_dims: Sequence[int], seed: int = 0, activation: str = "tanh"
    ) -> "ScoringModel":
        """Glorot-uniform weights, zero biases, drawn from ``seed``."""
        rng = np.random.default_rng(seed)
        dims = tuple(int(d) for d in layer_dims)
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(dims, weights, biases, activation)

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_dims[-1]

    def parameters(self) -> list[np.ndarray]:
        """Parameter arrays in canonical order ``W0, b0, W1, b1, ...``."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "ScoringModel":
        return ScoringModel(
            self.layer_dims,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
        )


@dataclass
class GradientTape:
    """Gradient accumulators, one per model parameter, in canonical order."""

    grads: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def zeros_like(cls, model: ScoringModel) -> "GradientTape":
        return cls([np.zeros_like(p) for p in model.parameters()])

    def zero(self) -> None:
        for g in self.grads:
            g.fill(0.0)

    def accumulate(self, other: "GradientTape") -> None:
        for g, h in zip(self.grads, other.grads):
            g += h

    def flat(self) -> np.ndarray:
        return np.concatenate([g.ravel() for g in self.grads])

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(g)) for g in self.grads)


def _as_batch(model: ScoringModel, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise ValueError(
            f"expected input of length {model.input_dim}, got shape {x.shape}"
        )
    if not np.all(np.isfinite(X)):
        raise ValueError("input contains non-finite values")
    return X, single


def _hidden(model: ScoringModel, z: np.ndarray) -> np.ndarray:
    return np.tanh(z) if model.activation == "tanh" else z


def _trace(model: ScoringModel, X: np.ndarray) -> list[np.ndarray]:
    """Layer inputs for every layer, followed by the network output."""
    acts = [X]
    h = X
    last = len(model.weights) - 1
    for k, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w.T + b
        h = z if k == last else _hidden(model, z)
        acts.append(h)
    return acts


def forward(model: ScoringModel, x) -> float | np.ndarray:
    """Score one feature vector or a batch of them.

    Parameters
    ----------
    model : ScoringModel
    x : array-like, shape (D,) or (n, D)

    Returns
    -------
    float for a single input on a one-output model; otherwise an array of
    shape ``(n,)`` (one output) or ``(n, K)`` / ``(K,)`` (K outputs).
    """
    X, single = _as_batch(model, x)
    out = _trace(model, X)[-1]
    if model.n_outputs == 1:
        out = out[:, 0]
        return float(out[0]) if single else out
    return out[0] if single else out


def backward(model: ScoringModel, x, upstream) -> GradientTape:
    """Gradient of ``sum(upstream * f(x))`` with respect to every parameter.

    ``upstream`` has the shape of ``forward(model, x)``; for a batch the
    per-sample contributions are summed.
    """
    X, single = _as_batch(model, x)
    acts = _trace(model, X)
    n = X.shape[0]
    delta = np.asarray(upstream, dtype=np.float64).reshape(n, model.n_outputs)
    grads: list[np.ndarray] = []
    for k in range(len(model.weights) - 1, -1, -1):
        h_in = acts[k]
        grads.append(delta.sum(axis=0))
        grads.append(delta.T @ h_in)
        if k > 0:
            delta = delta @ model.weights[k]
            if model.activation == "tanh":
                delta = delta * (1.0 - h_in * h_in)
    grads.reverse()
    return GradientTape(grads)
