"""Training loops for a single (optionally dropout-enabled) model and for
a deep ensemble of independently trained members."""
from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import MemberFailure, NonFiniteLoss
from .field import GridVectorField, grid_nodes, normalize_coords
from .network import AdamState, NetworkConfig, adam_step, backward, forward, init_parameters, unpack

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    batch_size: int = 2048
    learning_rate: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    patience: int = 10
    decay_factor: float = 0.1
    min_lr: float = 0.0
    seed: int = 0
    scale_targets: bool = False

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class TrainReport:
    loss: list = field(default_factory=list)
    learning_rate: list = field(default_factory=list)
    epoch_seconds: list = field(default_factory=list)
    total_seconds: float = 0.0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def make_epoch_batches(n_samples, batch_size, rng) -> list[np.ndarray]:
    """Shuffle ``0..n_samples-1`` and cut it into consecutive chunks."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    perm = rng.permutation(n_samples)
    return [perm[i:i + batch_size] for i in range(0, n_samples, batch_size)]


def mse_loss(pred, target):
    """Mean over batch entries and components, plus its gradient wrt ``pred``."""
    diff = pred - target
    with np.errstate(over="ignore", invalid="ignore"):
        loss = float(np.mean(diff * diff))
    return loss, 2.0 * diff / diff.size


def training_samples(f: GridVectorField):
    """Normalized node coordinates and node vectors of ``f``."""
    return normalize_coords(grid_nodes(f.domain), f.domain), np.asarray(f.data)


def _fold_target_scaling(params, config, lo, hi):
    # Undo min-max target scaling inside the output layer so checkpoints stay plain.
    half = 0.5 * (hi - lo)
    W, b = unpack(params, config)[-1]
    W *= half[:, None]
    b[...] = (b + 1.0) * half + lo


def train_single_model(f: GridVectorField, net_config: NetworkConfig, train_config: TrainConfig,
                       callback=None):
    """Fit the network to every node of ``f`` with MSE loss and Adam.

    Dropout is active during training unless the placement is ``"none"``.
    The plateau scheduler runs once per epoch on the mean epoch loss.
    Returns ``(params, TrainReport)``.
    """
    if net_config.input_dim != f.domain.ndim or net_config.output_dim != f.components:
        raise ValueError("network dimensions do not match the field")
    seq = np.random.SeedSequence(train_config.seed)
    init_ss, shuffle_ss, drop_ss = seq.spawn(3)
    params = init_parameters(net_config, int(init_ss.generate_state(1, np.uint64)[0]))
    shuffle_rng = np.random.default_rng(shuffle_ss)
    drop_rng = np.random.default_rng(drop_ss)

    x, y = training_samples(f)
    lo = hi = None
    if train_config.scale_targets:
        lo, hi = y.min(axis=0), y.max(axis=0)
        hi = np.where(hi > lo, hi, lo + 1.0)
        y = 2.0 * (y - lo) / (hi - lo) - 1.0

    p_train = net_config.dropout_p_train if net_config.dropout_placement != "none" else None
    state = AdamState.zeros(len(params), beta1=train_config.beta1, beta2=train_config.beta2,
                            epsilon=train_config.epsilon, learning_rate=train_config.learning_rate)
    report = TrainReport()
    best, stale = np.inf, 0
    t_start = time.perf_counter()
    for epoch in range(train_config.epochs):
        t0 = time.perf_counter()
        losses, counts = [], []
        for ib, idx in enumerate(make_epoch_batches(len(x), train_config.batch_size, shuffle_rng)):
            pred, trace = forward(params, net_config, x[idx], p=p_train, rng=drop_rng)
            loss, g = mse_loss(pred, y[idx])
            if not np.isfinite(loss):
                raise NonFiniteLoss(epoch, ib, loss)
            grads = backward(trace, params, net_config, g)
            state, params = adam_step(state, params, grads)
            losses.append(loss)
            counts.append(len(idx))
        epoch_loss = float(np.average(losses, weights=counts))
        report.loss.append(epoch_loss)
        report.learning_rate.append(state.learning_rate)
        # plateau decay, same rule as network.plateau_scheduler_step
        if epoch_loss < best:
            best, stale = epoch_loss, 0
        else:
            stale += 1
            if stale % train_config.patience == 0:
                lr = max(state.learning_rate * train_config.decay_factor, train_config.min_lr)
                state = replace(state, learning_rate=lr)
        report.epoch_seconds.append(time.perf_counter() - t0)
        if callback is not None:
            callback(epoch, epoch_loss, state.learning_rate)
    report.total_seconds = time.perf_counter() - t_start

    if lo is not None:
        _fold_target_scaling(params, net_config, lo, hi)
    return params, report


def member_seed(base_seed: int, member: int) -> int:
    """Seed of ensemble member ``member``.

    The first 64-bit word of ``numpy.random.SeedSequence([base_seed, member])``.
    """
    return int(np.random.SeedSequence([int(base_seed), int(member)]).generate_state(1, np.uint64)[0])


def _train_member(args):
    k, f, net_config, train_config = args
    try:
        return train_single_model(f, net_config, replace(train_config, seed=member_seed(train_config.seed, k)))
    except Exception as exc:  # re-raised with the member index attached
        raise MemberFailure(k, exc) from exc


def train_ensemble(f: GridVectorField, net_config: NetworkConfig, train_config: TrainConfig,
                   members: int, jobs: int = 1):
    """Train ``members`` independent models without dropout.

    Member ``k`` uses :func:`member_seed` ``(train_config.seed, k)``, which
    gives it its own initialisation and its own shuffling order.  Results
    do not depend on ``jobs``.
    Returns ``(list of params, list of TrainReport)``.
    """
    if members < 1:
        raise ValueError("members must be >= 1")
    if net_config.dropout_placement != "none":
        net_config = net_config.with_(dropout_placement="none")
    tasks = [(k, f, net_config, train_config) for k in range(members)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_train_member, tasks))
    else:
        results = [_train_member(t) for t in tasks]
    for k, (_, rep) in enumerate(results):
        log.info("member %d: final loss %.3e", k, rep.loss[-1] if rep.loss else float("nan"))
    return [r[0] for r in results], [r[1] for r in results]
