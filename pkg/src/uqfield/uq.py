"""Field realizations from a trained model and their reductions.

A realization set is produced either by Monte Carlo dropout (repeated
stochastic passes of one dropout-enabled model) or by a deep ensemble
(one deterministic pass per member).  Reductions give the predicted mean
field, an uncertainty field (per-component population standard deviation,
summed over components) and an L1 error field against ground truth.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientSamples
from .field import DomainSpec, GridVectorField, ScalarField, grid_nodes, normalize_coords, require_same_grid
from .network import NetworkConfig, forward, predict


@dataclass(frozen=True)
class FieldRealizationSet:
    domain: DomainSpec
    data: np.ndarray = field(repr=False)  # (m, n_nodes, v)
    source: str = "mcdropout"
    p_test: float | None = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3 or data.shape[1] != self.domain.n_nodes or data.shape[0] < 1:
            raise ValueError(f"realizations must be (m >= 1, {self.domain.n_nodes}, v), got {data.shape}")
        object.__setattr__(self, "data", data)

    @property
    def m(self) -> int:
        return self.data.shape[0]

    @property
    def components(self) -> int:
        return self.data.shape[2]

    def __len__(self):
        return self.m

    def __getitem__(self, i) -> GridVectorField:
        return GridVectorField(self.domain, self.data[i])

    @property
    def realizations(self) -> list[GridVectorField]:
        return [self[i] for i in range(self.m)]

    def subset(self, count) -> "FieldRealizationSet":
        """The first ``count`` realizations."""
        return FieldRealizationSet(self.domain, self.data[:count], self.source, self.p_test)

    @classmethod
    def from_fields(cls, fields, source="mcdropout", p_test=None) -> "FieldRealizationSet":
        fields = list(fields)
        for f in fields[1:]:
            require_same_grid(fields[0], f)
        return cls(fields[0].domain, np.stack([f.data for f in fields]), source, p_test)


def _node_inputs(domain):
    return normalize_coords(grid_nodes(domain), domain)


def reconstruct(params, config: NetworkConfig, domain: DomainSpec, batch_size=2048) -> GridVectorField:
    """Deterministic (dropout off) prediction at every grid node."""
    return GridVectorField(domain, predict(params, config, _node_inputs(domain), batch_size))


def realization_rng(seed, index) -> np.random.Generator:
    """Independent random stream for realization ``index``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def sample_mcdropout_pass(params, config, x, p_test, rng, batch_size=2048) -> np.ndarray:
    """One stochastic pass over ``x``; dropout masks are redrawn per batch."""
    return np.concatenate([forward(params, config, x[i:i + batch_size], p=p_test, rng=rng)[0]
                           for i in range(0, len(x), batch_size)])


def sample_realizations_mcdropout(params, config: NetworkConfig, domain: DomainSpec, m=100,
                                  p_test=None, seed=0, batch_size=2048) -> FieldRealizationSet:
    """``m`` full-grid passes with dropout active at ``p_test``.

    ``p_test`` defaults to ``config.dropout_p_test``.  Realization ``i``
    draws its masks from :func:`realization_rng` ``(seed, i)``, so the result
    does not depend on generation order.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    p_test = config.dropout_p_test if p_test is None else float(p_test)
    if not 0.0 <= p_test < 1.0:
        raise ValueError(f"p_test {p_test} outside [0, 1)")
    x = _node_inputs(domain)
    data = np.stack([sample_mcdropout_pass(params, config, x, p_test, realization_rng(seed, i), batch_size)
                     for i in range(m)])
    return FieldRealizationSet(domain, data, "mcdropout", p_test)


def sample_realizations_ensemble(member_params, config: NetworkConfig, domain: DomainSpec,
                                 batch_size=2048) -> FieldRealizationSet:
    """One deterministic full-grid prediction per ensemble member."""
    member_params = list(member_params)
    if not member_params:
        raise ValueError("an ensemble needs at least one member")
    x = _node_inputs(domain)
    data = np.stack([predict(p, config, x, batch_size) for p in member_params])
    return FieldRealizationSet(domain, data, "ensemble")


def _shifted_mean(data):
    # Mean relative to the first realization: identical inputs reproduce it bitwise.
    ref = data[0]
    return ref + (data - ref).mean(axis=0)


def mean_field(rs: FieldRealizationSet) -> GridVectorField:
    """Per-node, per-component average over realizations."""
    return GridVectorField(rs.domain, _shifted_mean(rs.data))


def component_std(rs: FieldRealizationSet) -> np.ndarray:
    """Population standard deviation per node and component, ``(n_nodes, v)``."""
    if rs.m < 2:
        raise InsufficientSamples(f"uncertainty needs at least 2 realizations, got {rs.m}")
    mu = _shifted_mean(rs.data)
    dev = rs.data - mu
    return np.sqrt((dev * dev).mean(axis=0))


def uncertainty_field(rs: FieldRealizationSet) -> ScalarField:
    """Sum over components of the per-component population std."""
    return ScalarField(rs.domain, component_std(rs).sum(axis=1))


def error_field(pred: GridVectorField, truth: GridVectorField) -> ScalarField:
    """Per-node L1 distance between predicted and true vectors."""
    require_same_grid(pred, truth)
    return ScalarField(pred.domain, np.abs(pred.data - truth.data).sum(axis=1))


class NeuralSampler:
    """Callable ``physical point -> vector`` backed by the network.

    With ``masks`` (from :meth:`draw_masks`) the dropout pattern is frozen,
    which turns one MC sample into a smooth field that can be traced.
    """

    def __init__(self, params, config: NetworkConfig, domain: DomainSpec, masks=None):
        self.params = params
        self.config = config
        self.domain = domain
        self.masks = masks

    @staticmethod
    def draw_masks(config: NetworkConfig, p, rng) -> dict:
        w = config.hidden_width
        return {k: ((rng.random((1, w)) >= p) / (1.0 - p)) for k in config.dropout_blocks()}

    def __call__(self, p):
        p = np.asarray(p, dtype=np.float64)
        x = normalize_coords(np.atleast_2d(p), self.domain)
        y = forward(self.params, self.config, x, masks=self.masks)[0]
        return y[0] if p.ndim == 1 else y
