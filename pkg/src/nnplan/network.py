"""Densely connected ReLU transition networks.

Layer ``k`` reads the concatenation ``[s, a, z_1, ..., z_{k-1}]`` of the raw
(or standardized) inputs and every earlier hidden activation.  Hidden layers
use ReLU; the last layer is linear and predicts the next state.

Weights are stored as ``(in, out)`` matrices so a layer computes
``inputs @ W + b``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from nnplan import autodiff as ad

FORMAT_VERSION = 1


class NetworkError(ValueError):
    pass


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Network:
    n_states: int
    n_actions: int
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    dropout: float = 0.1
    mean: np.ndarray | None = None
    std: np.ndarray | None = None
    folded: bool = False
    loss_weights: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(_frozen(w) for w in self.weights))
        object.__setattr__(self, "biases", tuple(_frozen(b) for b in self.biases))
        for name in ("mean", "std", "loss_weights"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, _frozen(v))
        if not 0.0 <= self.dropout < 1.0:
            raise NetworkError("dropout probability must lie in [0, 1)")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise NetworkError("need one bias vector per weight matrix and at least one layer")
        width = self.n_inputs
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or w.shape[0] != width or b.shape != (w.shape[1],):
                raise NetworkError(
                    f"layer {k + 1}: expected weights ({width}, *) and matching bias, "
                    f"got {w.shape} and {b.shape}")
            width += w.shape[1]
        if self.weights[-1].shape[1] != self.n_states:
            raise NetworkError("output layer width must equal the number of state variables")
        if (self.mean is None) != (self.std is None):
            raise NetworkError("mean and std must be given together")
        if self.folded and self.mean is not None:
            raise NetworkError("a folded network carries no standardization statistics")
        if self.std is not None:
            if self.std.shape != (self.n_inputs,) or self.mean.shape != (self.n_inputs,):
                raise NetworkError("standardization vectors must have one entry per input")
            if np.any(self.std <= 0):
                raise NetworkError("standard deviations must be positive")

    @property
    def n_inputs(self) -> int:
        return self.n_states + self.n_actions

    @property
    def hidden_widths(self) -> list[int]:
        return [w.shape[1] for w in self.weights[:-1]]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def layer_input_width(self, k: int) -> int:
        """Input width of layer ``k`` (0-based)."""
        return self.n_inputs + sum(self.hidden_widths[:k])

    def standardize(self, x: np.ndarray) -> np.ndarray:
        if self.mean is None:
            return x
        return (x - self.mean) / self.std


def init_network(n_states: int, n_actions: int, hidden: Sequence[int] = (), *, seed=0,
                 dropout: float = 0.1, mean=None, std=None, loss_weights=None) -> Network:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    width = n_states + n_actions
    for out in list(hidden) + [n_states]:
        limit = np.sqrt(6.0 / (width + out))
        weights.append(rng.uniform(-limit, limit, size=(width, out)))
        biases.append(np.zeros(out))
        width += out
    return Network(n_states, n_actions, tuple(weights), tuple(biases), dropout,
                   mean, std, False, loss_weights)


def _inputs(net: Network, state, action) -> np.ndarray:
    state = np.asarray(state, dtype=float)
    action = np.asarray(action, dtype=float)
    if state.shape[-1:] != (net.n_states,) or action.shape[-1:] != (net.n_actions,):
        raise NetworkError(
            f"expected state (..., {net.n_states}) and action (..., {net.n_actions}); "
            f"got {state.shape} and {action.shape}")
    batch = np.broadcast_shapes(state.shape[:-1], action.shape[:-1])
    x = np.concatenate([np.broadcast_to(state, batch + (net.n_states,)),
                        np.broadcast_to(action, batch + (net.n_actions,))], axis=-1)
    if not np.all(np.isfinite(x)):
        raise NetworkError("non-finite network input")
    return x


def dropout_masks(net: Network, batch_shape, rng: np.random.Generator) -> list[np.ndarray]:
    """Inverted-dropout masks: kept units are scaled by ``1 / (1 - p)``."""
    keep = 1.0 - net.dropout
    return [(rng.random(tuple(batch_shape) + (w,)) < keep) / keep for w in net.hidden_widths]


def forward(net: Network, state, action, mode: str = "eval", seed=None,
            return_hidden: bool = False, standardize: bool = True):
    """Predict the next state.

    Raw inputs are standardized with the network's statistics unless the
    network is folded or ``standardize`` is False.  ``mode="train"`` applies
    inverted dropout at every hidden layer using masks drawn from ``seed``.
    """
    x = _inputs(net, state, action)
    if standardize:
        x = net.standardize(x)
    masks = None
    if mode == "train" and net.dropout > 0:
        masks = dropout_masks(net, x.shape[:-1], np.random.default_rng(seed))
    elif mode not in ("train", "eval"):
        raise NetworkError(f"unknown mode {mode!r}")
    feats = x
    hidden = []
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        pre = feats @ w + b
        if k == net.n_layers - 1:
            out = pre
            break
        z = np.maximum(pre, 0.0)
        if masks is not None:
            z = z * masks[k]
        hidden.append(z)
        feats = np.concatenate([feats, z], axis=-1)
    if return_hidden:
        return out, hidden
    return out


def forward_graph(net: Network, x: ad.Node, params=None, masks=None) -> ad.Node:
    """Record the network on ``x``'s tape.

    ``x`` is the concatenated input node as the network expects it (already
    standardized unless the network is folded).  ``params`` optionally
    replaces ``(W, b)`` pairs with tape nodes, e.g. trainable leaves.
    """
    tape = x.tape
    if params is None:
        params = [(w, b) for w, b in zip(net.weights, net.biases)]
    feats = x
    for k, (w, b) in enumerate(params):
        pre = ad.add(ad.matmul(feats, w), b)
        if k == len(params) - 1:
            return pre
        z = ad.relu(pre)
        if masks is not None:
            z = ad.mul(z, masks[k])
        feats = ad.concat([feats, z], axis=-1)
    raise NetworkError("empty network")  # pragma: no cover


def step_graph(net: Network, state: ad.Node, action: ad.Node) -> ad.Node:
    """Next-state node for a folded (raw-input) network."""
    x = ad.concat([state, action], axis=-1)
    if not net.folded and net.mean is not None:
        x = ad.scale(ad.sub(x, net.mean), 1.0 / net.std)
    return forward_graph(net, x)


def rollout(net: Network, init, actions) -> np.ndarray:
    """States ``s_1..s_{H+1}`` of the learned model under an action sequence."""
    actions = np.asarray(actions, dtype=float)
    s = np.asarray(init, dtype=float)
    states = [s]
    for a in actions:
        s = forward(net, s, a)
        states.append(s)
    return np.array(states)


def fold_standardization(net: Network) -> Network:
    """Rewrite the network to accept unstandardized inputs.

    Raw inputs feed every layer through the dense skip connections, so the
    input-connected rows of every layer are rescaled and the biases absorb
    the mean shift.
    """
    if net.folded:
        raise NetworkError("network is already folded")
    if net.mean is None:
        return replace(net, folded=True)
    n = net.n_inputs
    inv = 1.0 / net.std
    weights, biases = [], []
    for w, b in zip(net.weights, net.biases):
        w = np.array(w)
        scaled = w[:n] * inv[:, None]
        biases.append(b - net.mean @ scaled)
        w[:n] = scaled
        weights.append(w)
    return replace(net, weights=tuple(weights), biases=tuple(biases), mean=None, std=None, folded=True)


# -- serialization ------------------------------------------------------------

def network_to_dict(net: Network) -> dict:
    return {
        "format": "nnplan-network",
        "version": FORMAT_VERSION,
        "n_states": net.n_states,
        "n_actions": net.n_actions,
        "hidden_widths": net.hidden_widths,
        "dropout": net.dropout,
        "layers": [{"weights": w.tolist(), "bias": b.tolist()} for w, b in zip(net.weights, net.biases)],
        "standardization": "folded" if net.folded else (
            None if net.mean is None else {"mean": net.mean.tolist(), "std": net.std.tolist()}),
        "loss_weights": None if net.loss_weights is None else net.loss_weights.tolist(),
    }


def network_from_dict(data: dict) -> Network:
    if data.get("format") != "nnplan-network":
        raise NetworkError("not a network file")
    if data.get("version") != FORMAT_VERSION:
        raise NetworkError(f"unsupported network file version {data.get('version')}")
    std = data.get("standardization")
    folded = std == "folded"
    mean = sd = None
    if isinstance(std, dict):
        mean, sd = std["mean"], std["std"]
    layers = data["layers"]
    weights = [np.array(l["weights"], dtype=float).reshape(-1, len(l["bias"])) for l in layers]
    return Network(
        int(data["n_states"]), int(data["n_actions"]),
        tuple(weights), tuple(np.array(l["bias"], float) for l in layers),
        float(data.get("dropout", 0.0)), mean, sd, folded, data.get("loss_weights"))


def save_network(net: Network, path: str | Path) -> None:
    Path(path).write_text(json.dumps(network_to_dict(net)))


def load_network(path: str | Path) -> Network:
    return network_from_dict(json.loads(Path(path).read_text()))
