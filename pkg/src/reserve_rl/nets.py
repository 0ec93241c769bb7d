"""Small feedforward networks with hand-written backprop.

The policy and value approximators are two-hidden-layer tanh MLPs, kept
in plain numpy (float64) so gradients are analytic, checkable against
finite differences, and bitwise reproducible per seed.  No autograd
framework is involved anywhere in training.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, NonFiniteActivation


@dataclass
class MLPParams:
    """Per-layer weight matrices (n_in, n_out) and bias vectors (n_out,)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def flat_arrays(self) -> list[np.ndarray]:
        """Weights and biases interleaved layer by layer (shared order
        for the optimizer, gradient clipping, and serialization)."""
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def copy(self) -> "MLPParams":
        return MLPParams(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


def orthogonal(n_in: int, n_out: int, gain: float, rng: np.random.Generator) -> np.ndarray:
    """Orthogonal weight init (QR of a Gaussian matrix, sign-fixed)."""
    a = rng.standard_normal((max(n_in, n_out), min(n_in, n_out)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))  # make the decomposition unique
    if n_in < n_out:
        q = q.T
    return gain * q[:n_in, :n_out]


def init_mlp(
    sizes: tuple[int, ...],
    rng: np.random.Generator,
    final_gain: float,
    hidden_gain: float = math.sqrt(2.0),
) -> MLPParams:
    """Initialize an MLP with orthogonal layers and zero biases.

    ``final_gain`` scales the output layer; a near-zero value there
    makes the initial policy distribution near-uniform.
    """
    weights = []
    biases = []
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        gain = final_gain if i == len(sizes) - 2 else hidden_gain
        weights.append(orthogonal(n_in, n_out, gain, rng))
        biases.append(np.zeros(n_out))
    return MLPParams(weights=weights, biases=biases)


def mlp_forward(params: MLPParams, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Forward pass with tanh hidden layers and a linear output.

    Args:
        x: Batch of inputs, shape (B, n_in).

    Returns:
        (output, cache) where cache holds each layer's input activation
        for the backward pass.

    Raises:
        NonFiniteActivation: NaN or infinity appeared in the output.
    """
    cache = [x]
    h = x
    last = params.n_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        h = z if i == last else np.tanh(z)
        if i < last:
            cache.append(h)
    if not np.all(np.isfinite(h)):
        raise NonFiniteActivation("non-finite value in network output")
    return h, cache


def mlp_backward(params: MLPParams, cache: list[np.ndarray], dout: np.ndarray) -> MLPParams:
    """Backprop ``dout`` (B, n_out) through the network; returns gradients."""
    grads_w = [np.empty(0)] * params.n_layers
    grads_b = [np.empty(0)] * params.n_layers
    delta = dout
    for i in range(params.n_layers - 1, -1, -1):
        a_in = cache[i]
        grads_w[i] = a_in.T @ delta
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params.weights[i].T) * (1.0 - cache[i] ** 2)
    return MLPParams(weights=grads_w, biases=grads_b)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


class Adam:
    """First/second-moment adaptive gradient descent over a list of arrays."""

    def __init__(
        self,
        arrays: list[np.ndarray],
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = [np.zeros_like(a) for a in arrays]
        self._v = [np.zeros_like(a) for a in arrays]

    def step(self, arrays: list[np.ndarray], grads: list[np.ndarray]) -> None:
        """Update ``arrays`` in place from matching ``grads``."""
        self.step_count += 1
        b1c = 1.0 - self.beta1 ** self.step_count
        b2c = 1.0 - self.beta2 ** self.step_count
        for a, g, m, v in zip(arrays, grads, self._m, self._v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            a -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def clip_global_norm(grads: list[np.ndarray], max_norm: float) -> float:
    """Scale all gradients in place so their joint L2 norm is <= max_norm."""
    total = math.sqrt(sum(float((g * g).sum()) for g in grads))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads:
            g *= scale
    return total


# --- serialization -----------------------------------------------------------

_FORMAT = "reserve-rl-policy-v1"


def _params_to_doc(params: MLPParams) -> dict:
    arrays = params.flat_arrays()
    return {
        "shapes": [list(a.shape) for a in arrays],
        "arrays": [a.reshape(-1).tolist() for a in arrays],  # row-major
    }


def _params_from_doc(doc: dict) -> MLPParams:
    arrays = [
        np.asarray(flat, dtype=float).reshape(shape)
        for shape, flat in zip(doc["shapes"], doc["arrays"])
    ]
    return MLPParams(weights=arrays[0::2], biases=arrays[1::2])


def save_networks(
    path: str,
    policy: MLPParams,
    value: MLPParams,
    config_fingerprint: str,
    seed: int,
) -> None:
    """Write both networks plus provenance to a deterministic JSON file."""
    doc = {
        "format": _FORMAT,
        "config_fingerprint": config_fingerprint,
        "seed": seed,
        "policy": _params_to_doc(policy),
        "value": _params_to_doc(value),
    }
    with open(path, "w") as handle:
        json.dump(doc, handle, sort_keys=True, separators=(",", ":"))


def load_networks(path: str) -> tuple[MLPParams, MLPParams, str, int]:
    """Inverse of :func:`save_networks`; floats round-trip exactly."""
    with open(path) as handle:
        doc = json.load(handle)
    if doc.get("format") != _FORMAT:
        raise DataError(f"unrecognized network file format in {path}")
    return (
        _params_from_doc(doc["policy"]),
        _params_from_doc(doc["value"]),
        doc["config_fingerprint"],
        int(doc["seed"]),
    )
