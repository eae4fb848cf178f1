"""Fitting transition networks to sampled transitions.

Minimizes ``mean_n ||gamma * (s'_n - f(s_n, a_n))||^2 + lambda * sum_k ||W_k||^2``
with RMSProp, inverted dropout on hidden layers and standardized inputs.
The weights with the best validation loss are returned.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from nnplan import autodiff as ad
from nnplan.dataset import Dataset
from nnplan.network import Network, dropout_masks, forward, forward_graph, init_network

logger = logging.getLogger(__name__)

MIN_ROWS = 100


class TrainingError(RuntimeError):
    pass


class TrainingDiverged(TrainingError):
    def __init__(self, epoch: int):
        super().__init__(f"training loss became non-finite at epoch {epoch}")
        self.epoch = epoch


def compute_loss_weights(dataset: Dataset) -> np.ndarray:
    """``gamma_i = 1 / max_n |s'_n[i]|`` (floored at 1e-9)."""
    if len(dataset) == 0:
        raise TrainingError("empty dataset")
    peak = np.max(np.abs(dataset.next_states), axis=0)
    dead = np.flatnonzero(peak == 0)
    if dead.size:
        raise TrainingError(f"next-state dimension(s) {dead.tolist()} are identically zero")
    return 1.0 / np.maximum(peak, 1e-9)


@dataclass
class TrainConfig:
    hidden: tuple[int, ...] = (32,)
    l2: float = 1e-6
    dropout: float = 0.1
    epochs: int = 200
    rate: float = 1e-3
    final_rate: float | None = None     # geometric decay from rate to final_rate over the epochs
    decay: float = 0.9
    eps: float = 1e-8
    batch_size: int = 128
    seed: int = 0
    split_seed: int = 0
    test_fraction: float = 0.2
    validation_fraction: float = 0.2


@dataclass
class TrainResult:
    network: Network
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    test_mse: float = float("nan")
    splits: dict = field(default_factory=dict)


class RMSProp:
    def __init__(self, shapes, rate=1e-3, decay=0.9, eps=1e-8):
        self.rate, self.decay, self.eps = rate, decay, eps
        self.sq = [np.zeros(s) for s in shapes]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        for p, g, sq in zip(params, grads, self.sq):
            sq *= self.decay
            sq += (1.0 - self.decay) * g * g
            p -= self.rate * g / (np.sqrt(sq) + self.eps)


def split_indices(n: int, seed: int, test_fraction=0.2, validation_fraction=0.2) -> dict:
    perm = np.random.default_rng(seed).permutation(n)
    n_test = int(round(test_fraction * n))
    test, train_all = perm[:n_test], perm[n_test:]
    n_val = int(round(validation_fraction * len(train_all)))
    return {"train": np.sort(train_all[n_val:]), "validation": np.sort(train_all[:n_val]),
            "test": np.sort(test)}


def weighted_loss(net: Network, x: np.ndarray, y: np.ndarray) -> float:
    """gamma-weighted mean squared error on standardized inputs (eval mode)."""
    n = net.n_states
    pred = forward(net, x[:, :n], x[:, n:], standardize=False)
    return float(np.mean(np.sum((net.loss_weights * (pred - y)) ** 2, axis=1)))


def mse(net: Network, data: Dataset) -> float:
    """Unweighted mean squared error of next-state predictions on raw data."""
    pred = forward(net, data.states, data.actions)
    return float(np.mean((pred - data.next_states) ** 2))


def train(dataset: Dataset, config: TrainConfig | None = None) -> TrainResult:
    cfg = config or TrainConfig()
    if len(dataset) < MIN_ROWS:
        raise TrainingError(f"need at least {MIN_ROWS} rows, got {len(dataset)}")
    splits = split_indices(len(dataset), cfg.split_seed, cfg.test_fraction, cfg.validation_fraction)
    train_set = dataset.subset(splits["train"])
    val_set = dataset.subset(splits["validation"])
    test_set = dataset.subset(splits["test"])

    x_train = train_set.inputs
    mean = x_train.mean(axis=0)
    std = x_train.std(axis=0)
    std = np.where(std > 1e-12, std, 1.0)
    gamma = compute_loss_weights(train_set)

    net = init_network(dataset.n_states, dataset.n_actions, cfg.hidden, seed=cfg.seed,
                       dropout=cfg.dropout, mean=mean, std=std, loss_weights=gamma)
    params = [np.array(a) for pair in zip(net.weights, net.biases) for a in pair]
    # start the output layer at the mean target so the optimizer only learns offsets
    params[-1] = train_set.next_states.mean(axis=0)
    opt = RMSProp([p.shape for p in params], cfg.rate, cfg.decay, cfg.eps)
    rng = np.random.default_rng(cfg.seed + 7919)

    xs = (x_train - mean) / std
    ys = train_set.next_states
    xv = (val_set.inputs - mean) / std if len(val_set) else xs
    yv = val_set.next_states if len(val_set) else ys

    def current() -> Network:
        return replace(net, weights=tuple(params[0::2]), biases=tuple(params[1::2]))

    best = current()
    best_val = weighted_loss(best, xv, yv)
    best_epoch = 0
    best_train = weighted_loss(best, xs, ys)
    history = [{"epoch": 0, "train_loss": best_train, "best_train_loss": best_train,
                "val_loss": best_val}]
    for epoch in range(1, cfg.epochs + 1):
        if cfg.final_rate is not None and cfg.epochs > 1:
            opt.rate = cfg.rate * (cfg.final_rate / cfg.rate) ** ((epoch - 1) / (cfg.epochs - 1))
        order = rng.permutation(len(xs))
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            grads, loss = _batch_gradients(net, params, xs[idx], ys[idx], gamma, cfg.l2, rng)
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch)
            opt.step(params, grads)
        snapshot = current()
        train_loss = weighted_loss(snapshot, xs, ys)
        val_loss = weighted_loss(snapshot, xv, yv)
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            raise TrainingDiverged(epoch)
        best_train = min(best_train, train_loss)
        history.append({"epoch": epoch, "train_loss": train_loss, "best_train_loss": best_train,
                        "val_loss": val_loss})
        if val_loss < best_val:
            best, best_val, best_epoch = snapshot, val_loss, epoch
        if epoch % 20 == 0:
            logger.debug("epoch %d train %.4g val %.4g", epoch, train_loss, val_loss)

    result = TrainResult(best, history, best_epoch, splits=splits)
    if len(test_set):
        result.test_mse = mse(best, test_set)
    return result


def _batch_gradients(net, params, xb, yb, gamma, l2, rng):
    tape = ad.Tape()
    leaves = [tape.leaf(p) for p in params]
    pairs = list(zip(leaves[0::2], leaves[1::2]))
    masks = dropout_masks(net, (len(xb),), rng) if net.dropout > 0 else None
    pred = forward_graph(net, tape.constant(xb), pairs, masks)
    err = ad.scale(ad.sub(pred, yb), gamma)
    loss = ad.scale(ad.sum_(ad.square(err)), 1.0 / len(xb))
    if l2:
        for w, _ in pairs:
            loss = ad.add(loss, ad.scale(ad.sum_(ad.square(w)), l2))
    return ad.grad(tape, loss, leaves), float(loss.value)
