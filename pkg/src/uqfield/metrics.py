"""Reconstruction, streamline and critical-point error metrics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .errors import EmptySet, EmptyTruth, ZeroRange
from .field import GridVectorField, require_same_grid


def rmse(pred: GridVectorField, truth: GridVectorField) -> float:
    require_same_grid(pred, truth)
    diff = pred.data - truth.data
    return float(np.sqrt(np.mean(diff * diff)))


def psnr(pred: GridVectorField, truth: GridVectorField) -> float:
    """``20 log10(range / rmse)``, range taken over all truth components jointly.

    Returns ``inf`` for a perfect reconstruction.
    """
    require_same_grid(pred, truth)
    rng = float(truth.data.max() - truth.data.min())
    if rng == 0:
        raise ZeroRange("PSNR is undefined for a constant ground truth")
    err = rmse(pred, truth)
    if err == 0:
        return math.inf
    return 20.0 * math.log10(rng / err)


def _point_sets(a, b):
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise EmptySet("distance between point sets needs two non-empty sets")
    return cdist(a, b)


def chamfer(a, b) -> float:
    """Symmetric mean nearest-neighbour distance between point sets."""
    d = _point_sets(a, b)
    return 0.5 * (float(d.min(axis=1).mean()) + float(d.min(axis=0).mean()))


def hausdorff(a, b) -> float:
    d = _point_sets(a, b)
    return max(float(d.min(axis=1).max()), float(d.min(axis=0).max()))


@dataclass
class CriticalPointMatch:
    rmse: float | None
    missed: int
    spurious: int
    pairs: list = field(default_factory=list)


def critical_point_rmse(pred, truth, match_radius=None, domain=None) -> CriticalPointMatch:
    """Match predicted to true critical points and report the position RMSE.

    Uses the one-to-one assignment of minimum total distance; matched pairs
    farther apart than ``match_radius`` (default: 5 % of the domain diagonal,
    or of the bounding-box diagonal of all points without a domain) are
    dropped.  ``rmse`` is ``None`` when nothing matches.
    """
    truth = np.asarray([getattr(p, "position", p) for p in truth], dtype=np.float64)
    if len(truth) == 0:
        raise EmptyTruth("critical point RMSE needs at least one true point")
    pred = np.asarray([getattr(p, "position", p) for p in pred], dtype=np.float64).reshape(-1, truth.shape[1])
    if match_radius is None:
        if domain is not None:
            diag = domain.diagonal
        else:
            allp = np.vstack([truth, pred])
            diag = float(np.linalg.norm(allp.max(axis=0) - allp.min(axis=0)))
        match_radius = 0.05 * diag
    if len(pred) == 0:
        return CriticalPointMatch(None, len(truth), 0)
    d = cdist(pred, truth)
    rows, cols = linear_sum_assignment(d)
    pairs = [(int(r), int(c)) for r, c in zip(rows, cols) if d[r, c] <= match_radius]
    if not pairs:
        return CriticalPointMatch(None, len(truth), len(pred))
    sq = [d[r, c] ** 2 for r, c in pairs]
    return CriticalPointMatch(float(np.sqrt(np.mean(sq))), len(truth) - len(pairs),
                              len(pred) - len(pairs), pairs)


@dataclass
class MetricReport:
    """Named metric values plus the configuration that produced them."""

    values: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"config": dict(self.config), "values": dict(self.values)}

    def to_text(self) -> str:
        rows = [(f"config.{k}", v) for k, v in self.config.items()] + list(self.values.items())
        width = max((len(k) for k, _ in rows), default=0)
        return "".join(f"{k:<{width}}  {_fmt(v)}\n" for k, v in rows)


def _fmt(v):
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.10g}"
    return "none" if v is None else str(v)
