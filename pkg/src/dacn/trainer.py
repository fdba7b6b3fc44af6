"""Adam optimization with seeded batching, early stopping on validation
loss, and best-epoch parameter snapshots.

Low-resolution inputs are built on the fly from the high-resolution
patches by area degradation, so only one resolution is ever stored. Every
(seed, data, config) triple fully determines the trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .band_grouping import plan_groups
from .data import DatasetSplit, degrade_array
from .errors import ConfigError, ContractError
from .loss import LossConfig, total_loss
from .model import DacnConfig, DacnParams, clone_params, forward, init_params, trainable_parameters
from .tensor import Tensor, no_grad


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 8
    patience: int = 10
    max_epochs: int = 100
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ConfigError("beta1 and beta2 must lie in (0, 1)")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")


@dataclass
class TrainState:
    step: int = 0
    m: dict = field(default_factory=dict)  # first-moment accumulators
    v: dict = field(default_factory=dict)  # second-moment accumulators
    best_val_loss: float = float("inf")
    epochs_since_improvement: int = 0


def adam_step(named_params: dict, state: TrainState, cfg: TrainConfig) -> None:
    """One bias-corrected Adam update over ``named_params`` in place."""
    state.step += 1
    t = state.step
    for name, p in named_params.items():
        if p.grad is None:
            raise ContractError(f"missing gradient for parameter {name!r}")
        g = p.grad
        m = state.m.get(name)
        v = state.v.get(name)
        m = (1 - cfg.beta1) * g if m is None else cfg.beta1 * m + (1 - cfg.beta1) * g
        v = (1 - cfg.beta2) * g**2 if v is None else cfg.beta2 * v + (1 - cfg.beta2) * g**2
        state.m[name], state.v[name] = m, v
        m_hat = m / (1 - cfg.beta1**t)
        v_hat = v / (1 - cfg.beta2**t)
        p.data = p.data - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)


def train(
    model_config: DacnConfig,
    data: DatasetSplit,
    cfg: TrainConfig,
    loss_config: LossConfig | None = None,
    params: DacnParams | None = None,
):
    """Epoch loop with shuffled seeded batches and early stopping.

    Returns (best_params, history) where history is one
    (epoch, train_loss, val_loss) row per executed epoch and best_params
    snapshots the epoch with the lowest validation total loss.
    """
    if not data.train or not data.val:
        raise ConfigError("train and validation splits must be non-empty")
    loss_config = loss_config or LossConfig()
    params = params if params is not None else init_params(model_config)
    bands = data.train[0].bands
    plan = plan_groups(bands, model_config.group_size, model_config.stride)
    train_samples = _group_samples(data.train, plan)
    val_samples = _group_samples(data.val, plan)
    rng = np.random.default_rng(cfg.seed)
    state = TrainState()
    history = []
    best_params = clone_params(params)
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(train_samples))
        losses = []
        for lo in range(0, len(order), cfg.batch_size):
            batch = [train_samples[i] for i in order[lo : lo + cfg.batch_size]]
            hr, lr = _make_batch(batch, data.scale)
            trainable = trainable_parameters(params, model_config)
            for p in trainable.values():
                p.grad = None
            pred = forward(lr, params, model_config, training=True)
            loss = total_loss(hr, pred, params, loss_config)
            loss.backward()
            adam_step(trainable, state, cfg)
            losses.append(loss.item())
        val_loss = _evaluate_split(val_samples, data.scale, params, model_config, loss_config)
        history.append((epoch, float(np.mean(losses)), val_loss))
        if val_loss < state.best_val_loss:
            state.best_val_loss = val_loss
            state.epochs_since_improvement = 0
            best_params = clone_params(params)
        else:
            state.epochs_since_improvement += 1
            if state.epochs_since_improvement >= cfg.patience:
                break
    return best_params, history


def _group_samples(patches, plan):
    return [(patch, start, end) for patch in patches for start, end in plan.groups]


def _make_batch(samples, scale):
    hr = np.stack([p.values[:, :, start:end] for p, start, end in samples])
    lr = degrade_array(hr, scale)
    return Tensor(hr), Tensor(lr)


def _evaluate_split(samples, scale, params, model_config, loss_config) -> float:
    losses = []
    with no_grad():
        for lo in range(0, len(samples), 8):
            hr, lr = _make_batch(samples[lo : lo + 8], scale)
            pred = forward(lr, params, model_config, training=False)
            losses.append(total_loss(hr, pred, params, loss_config).item())
    return float(np.mean(losses))


def history_to_csv(history) -> str:
    lines = ["epoch,train_loss,val_loss"]
    for epoch, train_loss_value, val_loss in history:
        lines.append(f"{epoch},{train_loss_value:.12g},{val_loss:.12g}")
    return "\n".join(lines) + "\n"
