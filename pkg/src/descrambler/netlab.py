"""Bias-free fully connected networks: evaluation, training, rank reduction."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .core import (
    ConfigError,
    DeerDataset,
    DivergenceError,
    FeedForwardNet,
    Layer,
    ShapeError,
    SizeError,
    as_matrix,
)

log = logging.getLogger(__name__)


def logsig(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "tanh":
        return np.tanh(z)
    if kind == "logsig":
        return logsig(z)
    if kind == "identity":
        return z.copy()
    raise ValueError(f"unknown activation {kind!r}")


def activation_derivative(a: np.ndarray, kind: str) -> np.ndarray:
    """Derivative expressed through the activation output ``a``."""
    if kind == "tanh":
        return 1.0 - a * a
    if kind == "logsig":
        return a * (1.0 - a)
    return np.ones_like(a)


def forward(net: FeedForwardNet, x: np.ndarray) -> np.ndarray:
    """y = F_n W_n ... F_1 W_1 x, one column per input vector."""
    return forward_trace(net, x)[-1]


def forward_trace(net: FeedForwardNet, x: np.ndarray) -> list[np.ndarray]:
    """Input followed by every layer's post-activation output."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] != net.input_dim:
        raise ShapeError(f"input has {x.shape[0]} rows, network expects {net.input_dim}")
    outs = [x]
    for layer in net.layers:
        outs.append(activate(layer.weights @ outs[-1], layer.activation))
    return outs


def glorot_init(
    topology: Sequence[tuple[int, str]], input_dim: int, rng: np.random.Generator, scale: float = 1.0
) -> FeedForwardNet:
    layers = []
    fan_in = input_dim
    for dim, act in topology:
        limit = scale * np.sqrt(6.0 / (fan_in + dim))
        layers.append(Layer(rng.uniform(-limit, limit, size=(dim, fan_in)), act))
        fan_in = dim
    return FeedForwardNet(tuple(layers))


def mse_loss_and_grads(weights: list[np.ndarray], activations: list[str], x: np.ndarray, y: np.ndarray):
    """Mean squared error over all entries and its gradient for every W_k."""
    outs = [x]
    for w, act in zip(weights, activations):
        outs.append(activate(w @ outs[-1], act))
    err = outs[-1] - y
    loss = float(np.mean(err * err))
    delta = (2.0 / err.size) * err
    grads = [None] * len(weights)
    for k in range(len(weights) - 1, -1, -1):
        delta = delta * activation_derivative(outs[k + 1], activations[k])
        grads[k] = delta @ outs[k].T
        if k:
            delta = weights[k].T @ delta
    return loss, grads


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    validation_fraction: float = 0.1
    init_scale: float = 1.0  # multiplies the Glorot-uniform limit
    # stop once the best validation loss has not improved by plateau_rtol
    # (relative) for `patience` epochs; 0 disables
    patience: int = 0
    plateau_rtol: float = 1e-2

    def validate(self) -> None:
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if not self.learning_rate > 0 or not self.adam_eps > 0 or not self.init_scale > 0:
            raise ConfigError("learning_rate and adam_eps must be positive")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ConfigError("Adam betas must lie in (0, 1)")
        if self.patience < 0 or not self.plateau_rtol >= 0:
            raise ConfigError("patience and plateau_rtol must be non-negative")
        if not 0 < self.validation_fraction < 0.5:
            raise ConfigError("validation_fraction must lie in (0, 0.5)")


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)
    validation_loss: list[float] = field(default_factory=list)
    initial_validation_loss: float = float("nan")
    stopped_epoch: int = 0
    plateau: bool = False
    seed: int = 0
    config: dict = field(default_factory=dict)
    topology: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def train(
    topology: Sequence[tuple[int, str]],
    data: DeerDataset,
    cfg: TrainConfig | None = None,
) -> tuple[FeedForwardNet, TrainReport]:
    """Fit a network to ``data`` by minibatch Adam on the mean squared error.

    ``topology`` lists (output dimension, activation) per layer; the input
    dimension comes from the dataset.
    """
    cfg = cfg or TrainConfig()
    cfg.validate()
    topology = [(int(d), str(a)) for d, a in topology]
    if not topology:
        raise ConfigError("empty topology")
    n_in = data.inputs.shape[0]
    if topology[-1][0] != data.targets.shape[0]:
        raise ConfigError(
            f"topology outputs {topology[-1][0]} values, dataset targets have {data.targets.shape[0]}"
        )
    rng = np.random.default_rng(cfg.seed)
    net = glorot_init(topology, n_in, rng, cfg.init_scale)

    n = data.n_traces
    n_val = max(1, int(round(cfg.validation_fraction * n)))
    if n - n_val < 1:
        raise ConfigError("dataset too small for a validation split")
    perm = rng.permutation(n)
    val_idx, tr_idx = np.sort(perm[:n_val]), np.sort(perm[n_val:])
    X, Y = data.inputs, data.targets
    Xv, Yv = X[:, val_idx], Y[:, val_idx]
    Xt, Yt = X[:, tr_idx], Y[:, tr_idx]

    weights = [np.array(w) for w in net.weights]
    acts = net.activations
    m = [np.zeros_like(w) for w in weights]
    v = [np.zeros_like(w) for w in weights]
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2

    report = TrainReport(seed=cfg.seed, config=asdict(cfg), topology=[list(t) for t in topology])
    report.initial_validation_loss = mse_loss_and_grads(weights, acts, Xv, Yv)[0]
    step = 0
    best, best_epoch = report.initial_validation_loss, 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(Xt.shape[1])
        batch_losses = []
        for start in range(0, order.size, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grads = mse_loss_and_grads(weights, acts, Xt[:, idx], Yt[:, idx])
            if not np.isfinite(loss):
                raise DivergenceError(f"loss became non-finite in epoch {epoch}")
            batch_losses.append(loss)
            step += 1
            for k, gk in enumerate(grads):
                m[k] = b1 * m[k] + (1 - b1) * gk
                v[k] = b2 * v[k] + (1 - b2) * gk * gk
                mhat = m[k] / (1 - b1**step)
                vhat = v[k] / (1 - b2**step)
                weights[k] = weights[k] - cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.adam_eps)
        vloss = mse_loss_and_grads(weights, acts, Xv, Yv)[0]
        if not np.isfinite(vloss):
            raise DivergenceError(f"validation loss became non-finite in epoch {epoch}")
        report.train_loss.append(float(np.mean(batch_losses)))
        report.validation_loss.append(vloss)
        report.stopped_epoch = epoch
        if epoch % 50 == 0:
            log.info("epoch %d train %.3e validation %.3e", epoch, report.train_loss[-1], vloss)
        if vloss < best * (1.0 - cfg.plateau_rtol):
            best, best_epoch = vloss, epoch
        elif cfg.patience and epoch - best_epoch >= cfg.patience:
            report.plateau = True
            log.info("validation plateau at epoch %d", epoch)
            break
    return FeedForwardNet.from_weights(weights, acts), report


def svd_truncate(w: np.ndarray, rank: int) -> np.ndarray:
    """Best rank-``rank`` approximation (Eckart-Young)."""
    w = as_matrix(w)
    if not 1 <= rank <= min(w.shape):
        raise SizeError(f"rank must lie in [1, {min(w.shape)}], got {rank}")
    u, s, vt = np.linalg.svd(w, full_matrices=False)
    return (u[:, :rank] * s[:rank]) @ vt[:rank]
