"""Feed-forward regression surrogate trained by mini-batch SGD.

ReLU hidden layers, linear output, inputs and targets standardised with
training-split statistics.  Plain numpy; the network is small enough that
backpropagation by hand is the simplest dependable option.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import SurrogateDivergenceError


@dataclass(frozen=True)
class SurrogateHyperparams:
    hidden: tuple[int, ...] = (16, 32, 100)
    epochs: int = 500
    batch_size: int = 32
    learning_rate: float = 1e-3
    momentum: float = 0.9
    validation_fraction: float = 0.2
    # candidate learning rates tried against the validation split
    learning_rate_grid: tuple[float, ...] = (1e-2, 1e-3, 1e-4)
    seed: int = 0


@dataclass(frozen=True, eq=False)
class TrainingSample:
    inputs: np.ndarray      # sensor pressures over M (m)
    target: np.ndarray      # pressures over O (m)
    roughness: np.ndarray
    demands: np.ndarray


def init_params(sizes: Sequence[int], rng: np.random.Generator) -> list[np.ndarray]:
    """Glorot-uniform weights, zero biases; returned as [W1, b1, W2, b2, ...]."""
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        params.append(np.zeros(fan_out))
    return params


def forward(params: list[np.ndarray], x: np.ndarray) -> np.ndarray:
    a = x
    n_layers = len(params) // 2
    for k in range(n_layers):
        a = a @ params[2 * k] + params[2 * k + 1]
        if k < n_layers - 1:
            a = np.maximum(a, 0.0)
    return a


def loss_and_grad(params: list[np.ndarray], x: np.ndarray, y: np.ndarray):
    """Loss ``0.5 * mean_samples sum_outputs err^2`` and its parameter gradient."""
    n_layers = len(params) // 2
    acts = [x]
    pre = []
    a = x
    for k in range(n_layers):
        z = a @ params[2 * k] + params[2 * k + 1]
        pre.append(z)
        a = np.maximum(z, 0.0) if k < n_layers - 1 else z
        acts.append(a)
    err = acts[-1] - y
    n = x.shape[0]
    loss = 0.5 * float(np.sum(err ** 2)) / n
    grads = [None] * len(params)
    delta = err / n
    for k in range(n_layers - 1, -1, -1):
        grads[2 * k] = acts[k].T @ delta
        grads[2 * k + 1] = delta.sum(axis=0)
        if k:
            delta = (delta @ params[2 * k].T) * (pre[k - 1] > 0)
    return loss, grads


@dataclass(eq=False)
class SurrogateNet:
    params: list[np.ndarray]
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: np.ndarray
    y_scale: np.ndarray
    input_nodes: tuple[str, ...] = ()
    output_nodes: tuple[str, ...] = ()
    scenario_id: str | None = None
    learning_rate: float = 0.0
    train_loss: float = float("nan")
    validation_mse: float = float("nan")
    # validation RMSE per output in metres
    validation_rmse: np.ndarray = field(default_factory=lambda: np.zeros(0))
    # outputs that varied in training; the others are returned as constants
    active: np.ndarray | None = None

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        x2 = np.atleast_2d(x)
        out = np.tile(self.y_mean, (x2.shape[0], 1))
        active = np.ones(self.y_mean.size, bool) if self.active is None else self.active
        if active.any():
            z = forward(self.params, (x2 - self.x_mean) / self.x_scale)
            out[:, active] = z * self.y_scale[active] + self.y_mean[active]
        return out[0] if x.ndim == 1 else out


def _scale(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = a.mean(axis=0)
    std = a.std(axis=0)
    return mean, np.where(std > 0, std, 1.0)


def _sgd(params, x, y, hp: SurrogateHyperparams, lr: float, rng: np.random.Generator) -> float:
    velocity = [np.zeros_like(p) for p in params]
    n = x.shape[0]
    loss = float("nan")
    for _ in range(hp.epochs):
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, hp.batch_size):
            idx = order[s:s + hp.batch_size]
            with np.errstate(over="ignore", invalid="ignore"):
                batch_loss, grads = loss_and_grad(params, x[idx], y[idx])
            total += batch_loss * idx.size
            for p, v, g in zip(params, velocity, grads):
                v *= hp.momentum
                v -= lr * g
                # Nesterov look-ahead form
                p += hp.momentum * v - lr * g
        loss = total / n
        if not np.isfinite(loss):
            raise SurrogateDivergenceError("training loss became non-finite",
                                           {"learning_rate": lr, "batch_size": hp.batch_size,
                                            "momentum": hp.momentum})
    return loss


def train_surrogate(samples: Sequence[TrainingSample], hyperparams: SurrogateHyperparams | None = None,
                    input_columns: Sequence[int] | None = None, *,
                    input_nodes: Sequence[str] = (), output_nodes: Sequence[str] = (),
                    scenario_id: str | None = None) -> SurrogateNet:
    """Fit the surrogate; the learning rate is picked on the validation split.

    ``input_columns`` selects which sensor inputs are fed to the network
    (default: all of them).
    """
    hp = hyperparams or SurrogateHyperparams()
    if len(samples) < 2:
        raise ValueError("at least two samples are needed for a train/validation split")
    x_all = np.array([s.inputs for s in samples], dtype=float)
    if input_columns is not None:
        x_all = x_all[:, list(input_columns)]
    y_all = np.array([s.target for s in samples], dtype=float)

    rng = np.random.default_rng(hp.seed)
    order = rng.permutation(len(samples))
    n_val = min(max(1, int(round(hp.validation_fraction * len(samples)))), len(samples) - 1)
    val, tr = order[:n_val], order[n_val:]
    x_mean, x_scale = _scale(x_all[tr])
    y_mean, y_scale = _scale(y_all[tr])
    active = np.ptp(y_all[tr], axis=0) > 0
    xs = (x_all - x_mean) / x_scale
    ys = ((y_all - y_mean) / y_scale)[:, active]
    if not active.any():
        err = (y_all[val] - y_mean) / y_scale
        return SurrogateNet([], x_mean, x_scale, y_mean, y_scale, tuple(input_nodes), tuple(output_nodes),
                            scenario_id, 0.0, 0.0, float(np.mean(err ** 2)),
                            np.sqrt(np.mean((y_all[val] - y_mean) ** 2, axis=0)), active)
    sizes = [xs.shape[1], *hp.hidden, ys.shape[1]]

    grid = hp.learning_rate_grid or (hp.learning_rate,)
    best = None
    failures = []
    for lr in grid:
        cand_rng = np.random.default_rng(hp.seed)
        params = init_params(sizes, cand_rng)
        try:
            loss = _sgd(params, xs[tr], ys[tr], hp, lr, cand_rng)
        except SurrogateDivergenceError as exc:
            failures.append(exc)
            continue
        with np.errstate(over="ignore", invalid="ignore"):
            err = forward(params, xs[val]) - ys[val]
            val_mse = float(np.mean(err ** 2))
        if not np.isfinite(val_mse):
            failures.append(SurrogateDivergenceError("validation error is non-finite", {"learning_rate": lr}))
            continue
        if best is None or val_mse < best[0]:
            best = (val_mse, lr, params, loss)
    if best is None:
        raise failures[-1]
    val_mse, lr, params, loss = best
    net = SurrogateNet(params, x_mean, x_scale, y_mean, y_scale, tuple(input_nodes), tuple(output_nodes),
                       scenario_id, lr, loss, float("nan"), active=active)
    err = (net.predict(x_all[val]) - y_all[val]) / y_scale
    net.validation_mse = float(np.mean(err ** 2))
    net.validation_rmse = np.sqrt(np.mean(err ** 2, axis=0)) * y_scale
    return net


def infer_full_pressure(net: SurrogateNet, scenario, measured) -> np.ndarray:
    """Expand measurements over J to an estimate over O; measured nodes keep their values."""
    measured = np.asarray(measured, dtype=float)
    if measured.shape != (len(net.input_nodes),) and net.input_nodes:
        raise ValueError(f"expected {len(net.input_nodes)} measurements, got {measured.shape}")
    if net.scenario_id is not None and scenario is not None and scenario.id != net.scenario_id:
        raise ValueError(f"surrogate was trained for scenario {net.scenario_id!r}, not {scenario.id!r}")
    estimate = np.array(net.predict(measured), dtype=float)
    out_pos = {nid: i for i, nid in enumerate(net.output_nodes)}
    for value, nid in zip(measured, net.input_nodes):
        if nid in out_pos:
            estimate[out_pos[nid]] = value
    return estimate
