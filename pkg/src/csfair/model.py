"""From-scratch MLP binary classifier with exact backpropagation.

ReLU hidden layers, a single sigmoid output unit, Glorot-uniform
initialization.  ``backward`` accepts gradient injection both at the
output probability and at the final hidden activations so fairness
regularizers can target either.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

PROB_CLIP = 1e-7
CHECKPOINT_VERSION = 1


@dataclass
class MlpParams:
    weights: list[np.ndarray]  # layer l: (out, in)
    biases: list[np.ndarray]  # layer l: (out,)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def hidden_sizes(self) -> list[int]:
        return [w.shape[0] for w in self.weights[:-1]]


@dataclass
class ForwardCache:
    inputs: np.ndarray
    pre_acts: list[np.ndarray]  # per layer, (B, out)
    acts: list[np.ndarray]  # post-ReLU hidden activations
    probs: np.ndarray  # clipped sigmoid outputs, (B,)

    @property
    def final_hidden(self) -> np.ndarray:
        """Activations of the last hidden layer (the inputs if there is none)."""
        return self.acts[-1] if self.acts else self.inputs


def init_mlp(hidden_sizes, input_dim: int, seed: int = 0) -> MlpParams:
    """Glorot-uniform weights, zero biases, deterministic per seed."""
    if input_dim < 1:
        raise InvalidArgumentError("input_dim must be >= 1")
    sizes = [int(input_dim)] + [int(h) for h in hidden_sizes] + [1]
    if any(s < 1 for s in sizes):
        raise InvalidArgumentError(f"zero-size layer in {sizes}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def forward(params: MlpParams, X) -> ForwardCache:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != params.input_dim:
        raise InvalidArgumentError(
            f"expected input of width {params.input_dim}, got shape {X.shape}"
        )
    a = X
    pre_acts, acts = [], []
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        z = a @ w.T + b
        pre_acts.append(z)
        a = np.maximum(z, 0.0)
        acts.append(a)
    logits = (a @ params.weights[-1].T + params.biases[-1]).ravel()
    pre_acts.append(logits[:, None])
    probs = np.clip(_sigmoid(logits), PROB_CLIP, 1.0 - PROB_CLIP)
    return ForwardCache(X, pre_acts, acts, probs)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def bce_loss(z, y) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy and its gradient with respect to z."""
    z = np.asarray(z, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if z.shape != y.shape:
        raise InvalidArgumentError("z and y must have equal length")
    zc = np.clip(z, PROB_CLIP, 1.0 - PROB_CLIP)
    n = z.size
    value = float(-np.mean(y * np.log(zc) + (1.0 - y) * np.log(1.0 - zc)))
    grad = (zc - y) / (zc * (1.0 - zc)) / n
    return value, grad


def backward(
    params: MlpParams,
    cache: ForwardCache,
    dloss_dz: np.ndarray,
    dloss_dhidden: np.ndarray | None = None,
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Exact reverse-mode gradients of the injected loss terms.

    ``dloss_dz`` is the gradient at the output probabilities; an optional
    ``dloss_dhidden`` is added at the final hidden activations.  Returns
    (weight gradients, bias gradients) matching the parameter shapes.
    """
    dloss_dz = np.asarray(dloss_dz, dtype=float).ravel()
    if dloss_dz.shape[0] != cache.probs.shape[0]:
        raise InvalidArgumentError("dloss_dz length mismatch")
    z = cache.probs
    delta_logit = dloss_dz * z * (1.0 - z)  # (B,)

    n_layers = len(params.weights)
    grads_w = [np.zeros_like(w) for w in params.weights]
    grads_b = [np.zeros_like(b) for b in params.biases]

    final_hidden = cache.final_hidden
    grads_w[-1] = delta_logit[None, :] @ final_hidden
    grads_b[-1] = np.array([delta_logit.sum()])

    # gradient flowing into the final hidden activations
    delta = delta_logit[:, None] @ params.weights[-1]
    if dloss_dhidden is not None:
        dloss_dhidden = np.asarray(dloss_dhidden, dtype=float)
        if dloss_dhidden.shape != final_hidden.shape:
            raise InvalidArgumentError(
                f"dloss_dhidden shape {dloss_dhidden.shape} != {final_hidden.shape}"
            )
        delta = delta + dloss_dhidden

    for layer in range(n_layers - 2, -1, -1):
        delta = delta * (cache.pre_acts[layer] > 0)
        below = cache.acts[layer - 1] if layer > 0 else cache.inputs
        grads_w[layer] = delta.T @ below
        grads_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = delta @ params.weights[layer]
    return grads_w, grads_b


def l2_penalty(
    params: MlpParams, beta: float
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """(beta/2) * sum of squared weights; biases excluded."""
    if beta < 0:
        raise InvalidArgumentError("beta must be >= 0")
    value = 0.5 * beta * sum(float(np.sum(w**2)) for w in params.weights)
    grads_w = [beta * w for w in params.weights]
    grads_b = [np.zeros_like(b) for b in params.biases]
    return value, grads_w, grads_b


def save_checkpoint(params: MlpParams, path: str):
    """Bit-exact round-trip serialization of the parameters."""
    arrays = {}
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    meta = json.dumps({"version": CHECKPOINT_VERSION, "n_layers": len(params.weights)})
    np.savez(path, __meta__=np.frombuffer(meta.encode(), dtype=np.uint8), **arrays)


def load_checkpoint(path: str) -> MlpParams:
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta.get("version") != CHECKPOINT_VERSION:
            raise InvalidArgumentError(
                f"unsupported checkpoint version {meta.get('version')}"
            )
        n = meta["n_layers"]
        weights = [data[f"w{i}"] for i in range(n)]
        biases = [data[f"b{i}"] for i in range(n)]
    return MlpParams(weights, biases)
