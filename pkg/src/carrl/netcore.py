"""Dense ReLU Q-networks: forward pass, gradients and weight files.

A network is a chain of affine layers with ReLU between them and a linear
output layer, so the outputs are unconstrained Q-values (one per action).
Every array is float64. Networks are immutable; training builds new ones.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np


class NetworkFormatError(ValueError):
    """Raised when layer shapes do not chain or a weight file is malformed."""


def _frozen(a, name):
    arr = np.array(a, dtype=np.float64, copy=True)
    if not np.all(np.isfinite(arr)):
        raise NetworkFormatError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class DenseReluNetwork:
    """Fully connected ReLU network with a linear output layer.

    Parameters
    ----------
    weights : sequence of ndarray
        ``weights[k]`` has shape ``(units_out, units_in)``.
    biases : sequence of ndarray
        ``biases[k]`` has shape ``(units_out,)``.
    """

    weights: tuple
    biases: tuple

    def __post_init__(self):
        if len(self.weights) == 0:
            raise NetworkFormatError("network needs at least one layer")
        if len(self.weights) != len(self.biases):
            raise NetworkFormatError(
                f"{len(self.weights)} weight matrices but {len(self.biases)} bias vectors"
            )
        ws, bs = [], []
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            w = _frozen(w, f"layer {k} weights")
            b = _frozen(b, f"layer {k} bias")
            if w.ndim != 2:
                raise NetworkFormatError(f"layer {k}: weights must be 2-D, got shape {w.shape}")
            if b.shape != (w.shape[0],):
                raise NetworkFormatError(
                    f"layer {k}: bias shape {b.shape} does not match {w.shape[0]} output units"
                )
            if k > 0 and w.shape[1] != ws[-1].shape[0]:
                raise NetworkFormatError(
                    f"layer {k}: expects {w.shape[1]} inputs but layer {k - 1} "
                    f"produces {ws[-1].shape[0]}"
                )
            ws.append(w)
            bs.append(b)
        object.__setattr__(self, "weights", tuple(ws))
        object.__setattr__(self, "biases", tuple(bs))

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def n_inputs(self) -> int:
        return self.weights[0].shape[1]

    @property
    def n_actions(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def layer_sizes(self) -> list[int]:
        return [self.n_inputs] + [w.shape[0] for w in self.weights]

    def __eq__(self, other):
        if not isinstance(other, DenseReluNetwork):
            return NotImplemented
        return other.n_layers == self.n_layers and all(
            np.array_equal(a, b) for a, b in zip(self.weights + self.biases, other.weights + other.biases)
        )

    __hash__ = None


def init_network(layer_sizes: Sequence[int], rng: np.random.Generator) -> DenseReluNetwork:
    """He-uniform initialised network; ``layer_sizes`` includes input and output widths."""
    if len(layer_sizes) < 2:
        raise ValueError("layer_sizes needs an input and an output width")
    weights, biases = [], []
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = np.sqrt(6.0 / n_in)
        weights.append(rng.uniform(-limit, limit, size=(n_out, n_in)))
        biases.append(np.zeros(n_out))
    return DenseReluNetwork(weights, biases)


def _check_input(net, s):
    s = np.asarray(s, dtype=np.float64)
    if s.ndim not in (1, 2) or s.shape[-1] != net.n_inputs:
        raise ValueError(f"expected observation(s) of length {net.n_inputs}, got shape {s.shape}")
    return s


def forward_with_preactivations(net: DenseReluNetwork, s):
    """Return ``(q, [z1, ..., z_{m-1}])`` with the hidden pre-ReLU activations.

    ``s`` may be a single observation or a batch with observations in rows.
    """
    h = _check_input(net, s)
    pre = []
    last = net.n_layers - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w.T + b
        if k == last:
            return z, pre
        pre.append(z)
        h = np.maximum(z, 0.0)


def forward(net: DenseReluNetwork, s) -> np.ndarray:
    """Q-values for one observation (shape ``(A,)``) or a batch (``(B, A)``)."""
    return forward_with_preactivations(net, s)[0]


def softmax(logits):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _check_onehot(target, n):
    t = np.asarray(target, dtype=np.float64)
    if t.shape != (n,):
        raise ValueError(f"target length {t.shape} does not match {n} logits")
    if not (np.all((t == 0.0) | (t == 1.0)) and t.sum() == 1.0):
        raise ValueError("target must be one-hot")
    return t


def softmax_cross_entropy(target_onehot, logits) -> float:
    """Cross-entropy between a one-hot target and ``softmax(logits)``."""
    z = np.asarray(logits, dtype=np.float64)
    t = _check_onehot(target_onehot, z.shape[-1])
    zmax = z.max()
    log_norm = zmax + np.log(np.exp(z - zmax).sum())
    return float(log_norm - z[int(np.argmax(t))])


def input_gradient(net: DenseReluNetwork, s, target_onehot) -> np.ndarray:
    """Gradient of the softmax cross-entropy of ``forward(net, s)`` w.r.t. ``s``.

    The ReLU derivative at exactly zero is taken as 0.
    """
    s = _check_input(net, s)
    if s.ndim != 1:
        raise ValueError("input_gradient takes a single observation")
    q, pre = forward_with_preactivations(net, s)
    t = _check_onehot(target_onehot, q.shape[0])
    g = softmax(q) - t
    for k in range(net.n_layers - 1, -1, -1):
        g = net.weights[k].T @ g
        if k > 0:
            g = g * (pre[k - 1] > 0.0)
    return g


def td_loss(net: DenseReluNetwork, states, actions, targets) -> float:
    """Mean squared TD error ``mean((Q(s_i, a_i) - y_i)**2)``."""
    q = forward(net, np.atleast_2d(states))
    idx = np.asarray(actions, dtype=np.intp)
    resid = q[np.arange(len(idx)), idx] - np.asarray(targets, dtype=np.float64)
    return float(np.mean(resid**2))


def weight_gradients(net: DenseReluNetwork, states, actions, targets):
    """Gradients of the mean squared TD error w.r.t. every layer.

    Returns
    -------
    list of (dW, db) tuples, one per layer, same shapes as the network.
    """
    states = _check_input(net, states)
    states = np.atleast_2d(states)
    actions = np.asarray(actions, dtype=np.intp).reshape(-1)
    targets = np.asarray(targets, dtype=np.float64).reshape(-1)
    batch = states.shape[0]
    if batch == 0:
        raise ValueError("empty batch")
    if actions.shape[0] != batch or targets.shape[0] != batch:
        raise ValueError("states, actions and targets must have the same length")
    if np.any(actions < 0) or np.any(actions >= net.n_actions):
        raise ValueError(f"action indices must lie in [0, {net.n_actions})")

    q, pre = forward_with_preactivations(net, states)
    rows = np.arange(batch)
    delta = np.zeros_like(q)
    delta[rows, actions] = 2.0 * (q[rows, actions] - targets) / batch

    grads = [None] * net.n_layers
    for k in range(net.n_layers - 1, -1, -1):
        h_in = states if k == 0 else np.maximum(pre[k - 1], 0.0)
        grads[k] = (delta.T @ h_in, delta.sum(axis=0))
        if k > 0:
            delta = (delta @ net.weights[k]) * (pre[k - 1] > 0.0)
    return grads


def network_to_dict(net: DenseReluNetwork) -> dict:
    return {"layers": [{"w": w.tolist(), "b": b.tolist()} for w, b in zip(net.weights, net.biases)]}


def network_from_dict(data) -> DenseReluNetwork:
    if not isinstance(data, dict) or "layers" not in data:
        raise NetworkFormatError("weight file must be an object with a 'layers' list")
    layers = data["layers"]
    if not isinstance(layers, list) or not layers:
        raise NetworkFormatError("'layers' must be a non-empty list")
    weights, biases = [], []
    for k, layer in enumerate(layers):
        if not isinstance(layer, dict) or "w" not in layer or "b" not in layer:
            raise NetworkFormatError(f"layer {k}: expected an object with 'w' and 'b'")
        try:
            w = np.array(layer["w"], dtype=np.float64)
            b = np.array(layer["b"], dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise NetworkFormatError(f"layer {k}: {exc}") from exc
        if w.ndim != 2 or w.shape[0] == 0 or w.shape[1] == 0:
            raise NetworkFormatError(f"layer {k}: 'w' must be a non-empty rectangular matrix")
        weights.append(w)
        biases.append(b)
    return DenseReluNetwork(weights, biases)


def save_network(net: DenseReluNetwork, path) -> None:
    """Write ``net`` as JSON. Floats are written with round-trip precision."""
    Path(path).write_text(json.dumps(network_to_dict(net)))


def load_network(path) -> DenseReluNetwork:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise NetworkFormatError(f"{path}: not valid JSON ({exc})") from exc
    return network_from_dict(data)
