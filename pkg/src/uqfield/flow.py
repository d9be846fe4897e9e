"""Streamlines, uncertainty-aware streamline aggregation, critical points
and the critical-point variability field.

Samplers are plain callables ``point (d,) -> vector (d,)``; a
:class:`~uqfield.field.GridVectorField` or a
:class:`~uqfield.uq.NeuralSampler` both qualify.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyBundle, NonSquare, OutOfDomain, SeedOutOfDomain
from .field import DOMAIN_TOL, DomainSpec, GridVectorField, ScalarField, _cell_coords, grid_nodes

STAGNATION_SPEED = 1e-12


def default_step(domain: DomainSpec) -> float:
    """A quarter of the smallest grid spacing."""
    return 0.25 * float(np.min(domain.spacing))


def _inside(domain, p):
    if domain is None:
        return True
    slack = DOMAIN_TOL * (domain.hi - domain.lo)
    return bool(np.all(p >= domain.lo - slack) and np.all(p <= domain.hi + slack))


def rk4_step(sampler, p, h, domain: DomainSpec | None = None, k1=None):
    """Classic fourth-order Runge-Kutta step of size ``h`` (negative: backward).

    When ``domain`` is given every stage point and the result must lie inside
    it, otherwise :class:`OutOfDomain` is raised and the step is rejected.
    """
    p = np.asarray(p, dtype=np.float64)

    def v(q):
        if not _inside(domain, q):
            raise OutOfDomain(f"RK4 stage point {q.tolist()} left the domain")
        return np.asarray(sampler(q), dtype=np.float64)

    if k1 is None:
        k1 = v(p)
    k2 = v(p + 0.5 * h * k1)
    k3 = v(p + 0.5 * h * k2)
    k4 = v(p + h * k3)
    out = p + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not _inside(domain, out):
        raise OutOfDomain(f"RK4 step ended outside the domain at {out.tolist()}")
    return out


@dataclass
class Streamline:
    """Backward points (reversed), the seed, then forward points."""

    points: np.ndarray
    seed_index: int
    termination: dict = field(default_factory=dict)

    @property
    def seed(self):
        return self.points[self.seed_index]

    @property
    def n_forward(self) -> int:
        return len(self.points) - self.seed_index - 1

    @property
    def n_backward(self) -> int:
        return self.seed_index

    def __len__(self):
        return len(self.points)


def _trace_one_way(sampler, seed, h, max_steps, domain):
    pts, p = [], seed
    for _ in range(max_steps):
        try:
            k1 = np.asarray(sampler(p), dtype=np.float64)
        except OutOfDomain:
            return pts, "domain_exit"
        if np.linalg.norm(k1) < STAGNATION_SPEED:
            return pts, "zero_velocity"
        try:
            p = rk4_step(sampler, p, h, domain, k1=k1)
        except OutOfDomain:
            return pts, "domain_exit"
        pts.append(p)
    return pts, "max_steps"


def trace_streamline(sampler, seed, h=None, max_steps=1000, domain: DomainSpec | None = None) -> Streamline:
    """Trace forward (+h) and backward (-h) from ``seed``.

    Each direction stops when a step would leave ``domain``, after
    ``max_steps`` steps, or where the speed drops below 1e-12.
    """
    if domain is None:
        domain = getattr(sampler, "domain", None)
    if h is None:
        h = default_step(domain)
    if not h > 0:
        raise ValueError("step size must be positive")
    seed = np.asarray(seed, dtype=np.float64)
    if domain is not None and not _inside(domain, seed):
        raise SeedOutOfDomain(f"seed {seed.tolist()} is outside the domain")
    fwd, tf = _trace_one_way(sampler, seed, h, max_steps, domain)
    bwd, tb = _trace_one_way(sampler, seed, -h, max_steps, domain)
    pts = np.array(bwd[::-1] + [seed] + fwd).reshape(-1, len(seed))
    return Streamline(pts, len(bwd), {"forward": tf, "backward": tb})


# --------------------------------------------------------------------------
# batched tracing over a stack of gridded realizations


def _interp_stack(domain, data, ridx, p):
    # data: (m, n_nodes, v); ridx: (k,) realization per point; p: (k, d)
    i0, frac = _cell_coords(domain, p)
    strides = np.cumprod((1,) + domain.dims[:-1])
    out = 0.0
    for corner in itertools.product((0, 1), repeat=domain.ndim):
        c = np.asarray(corner)
        w = np.prod(np.where(c == 1, frac, 1.0 - frac), axis=-1)
        idx = ((i0 + c) * strides).sum(axis=-1)
        out = out + w[:, None] * data[ridx, idx]
    return out


def _trace_stack_one_way(domain, data, seed, h, max_steps):
    m = data.shape[0]
    slack = DOMAIN_TOL * (domain.hi - domain.lo)
    lo, hi = domain.lo - slack, domain.hi + slack
    p = np.repeat(seed[None, :], m, axis=0)
    alive = np.arange(m)
    history = [[] for _ in range(m)]
    term = ["max_steps"] * m

    def inside(q):
        return np.all((q >= lo) & (q <= hi), axis=-1)

    for _ in range(max_steps):
        if alive.size == 0:
            break
        q = p[alive]
        k1 = _interp_stack(domain, data, alive, q)
        ok = np.linalg.norm(k1, axis=-1) >= STAGNATION_SPEED
        for r in alive[~ok]:
            term[r] = "zero_velocity"
        stage = [k1]
        for a in (0.5, 0.5, 1.0):
            s = q + a * h * stage[-1]
            ok &= inside(s)
            s = np.where(ok[:, None], s, q)
            stage.append(_interp_stack(domain, data, alive, s))
        k1, k2, k3, k4 = stage
        new = q + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        exited = ~inside(new) | (~ok & (np.linalg.norm(k1, axis=-1) >= STAGNATION_SPEED))
        for r in alive[exited]:
            term[r] = "domain_exit"
        ok &= ~exited
        for r, pt in zip(alive[ok], new[ok]):
            history[r].append(pt)
        p[alive[ok]] = new[ok]
        alive = alive[ok]
    return history, term


def trace_realizations(realizations, seed, h=None, max_steps=1000) -> list[Streamline]:
    """Trace the same seed through every gridded realization at once.

    ``realizations`` is a :class:`~uqfield.uq.FieldRealizationSet` (or a list
    of fields on one grid).  Gives the same streamlines as calling
    :func:`trace_streamline` on each realization, vectorised across them.
    """
    if isinstance(realizations, (list, tuple)):
        domain = realizations[0].domain
        data = np.stack([f.data for f in realizations])
    else:
        domain, data = realizations.domain, realizations.data
    if h is None:
        h = default_step(domain)
    if not h > 0:
        raise ValueError("step size must be positive")
    seed = np.asarray(seed, dtype=np.float64)
    if not _inside(domain, seed):
        raise SeedOutOfDomain(f"seed {seed.tolist()} is outside the domain")
    fwd, tf = _trace_stack_one_way(domain, data, seed, h, max_steps)
    bwd, tb = _trace_stack_one_way(domain, data, seed, -h, max_steps)
    out = []
    for r in range(data.shape[0]):
        pts = np.array(bwd[r][::-1] + [seed] + fwd[r]).reshape(-1, domain.ndim)
        out.append(Streamline(pts, len(bwd[r]), {"forward": tf[r], "backward": tb[r]}))
    return out


# --------------------------------------------------------------------------
# aggregation


@dataclass
class StreamlineBundle:
    """``n`` realizations of one streamline plus their step-wise aggregate.

    ``mean``, ``median``, ``uncertainty`` and ``support`` are indexed by
    aggregate step; ``seed_index`` locates the seed step.
    """

    realizations: list
    mean: np.ndarray
    median: np.ndarray
    uncertainty: np.ndarray
    support: np.ndarray
    seed_index: int

    def __len__(self):
        return len(self.mean)


def _padded(realizations):
    back = max(s.seed_index for s in realizations)
    fwd = max(s.n_forward for s in realizations)
    d = realizations[0].points.shape[1]
    arr = np.full((len(realizations), back + fwd + 1, d), np.nan)
    for i, s in enumerate(realizations):
        start = back - s.seed_index
        arr[i, start:start + len(s.points)] = s.points
    return arr, back


def aggregate_streamlines(realizations) -> StreamlineBundle:
    """Align realizations by signed step index and reduce each step.

    At every step only realizations that still exist there contribute
    (those that left the domain earlier are skipped).  The per-step
    uncertainty is the sum over axes of the population std of coordinates.
    """
    realizations = list(realizations)
    if not realizations:
        raise EmptyBundle("cannot aggregate an empty set of streamlines")
    arr, seed_index = _padded(realizations)
    present = ~np.isnan(arr[..., 0])
    support = present.sum(axis=0)
    # shift by the first surviving realization at each step
    first = np.argmax(present, axis=0)
    ref = arr[first, np.arange(arr.shape[1])]
    dev = arr - ref
    mean = ref + np.nanmean(dev, axis=0)
    spread = arr - mean
    std = np.sqrt(np.nanmean(spread * spread, axis=0))
    median = np.nanmedian(arr, axis=0)
    return StreamlineBundle(realizations, mean, median, std.sum(axis=-1), support, seed_index)


# --------------------------------------------------------------------------
# critical points

CRITICAL_KINDS = ("source", "sink", "saddle", "center", "spiral_source", "spiral_sink", "degenerate")


@dataclass
class CriticalPoint:
    position: np.ndarray
    kind: str
    jacobian: np.ndarray


def classify_critical_point(jacobian, rel_tol=1e-9) -> str:
    """Label a critical point from the eigenvalues of its Jacobian.

    Real parts count as zero below ``rel_tol * ||J||`` (Frobenius norm); an
    eigenvalue of that size makes the point degenerate.
    """
    J = np.asarray(jacobian, dtype=np.float64)
    if J.ndim != 2 or J.shape[0] != J.shape[1] or J.shape[0] not in (2, 3):
        raise NonSquare(f"Jacobian must be a 2x2 or 3x3 matrix, got shape {J.shape}")
    tol = rel_tol * np.linalg.norm(J)
    if tol == 0:
        return "degenerate"
    lam = np.linalg.eigvals(J)
    if np.any(np.abs(lam) < tol):
        return "degenerate"
    pos, neg = lam.real > tol, lam.real < -tol
    spiral = bool(np.any(np.abs(lam.imag) > tol))
    if pos.any() and neg.any():
        return "saddle"
    if pos.all():
        return "spiral_source" if spiral else "source"
    if neg.all():
        return "spiral_sink" if spiral else "sink"
    if not pos.any() and not neg.any() and spiral:
        return "center"
    return "degenerate"


def interpolant_jacobian(f: GridVectorField, p, rel_step=1e-4) -> np.ndarray:
    """Central-difference Jacobian ``J[i, j] = d v_i / d x_j`` of the interpolant."""
    p = np.asarray(p, dtype=np.float64)
    dom = f.domain
    J = np.empty((f.components, dom.ndim))
    for j in range(dom.ndim):
        step = rel_step * dom.spacing[j]
        a, b = p.copy(), p.copy()
        a[j] = min(p[j] + step, dom.hi[j])
        b[j] = max(p[j] - step, dom.lo[j])
        J[:, j] = (f(a) - f(b)) / (a[j] - b[j])
    return J


def _candidate_cells(f):
    arr = f.array  # (nz, ny, nx, v) slowest first
    nd = f.domain.ndim
    corners = []
    for corner in itertools.product((0, 1), repeat=nd):
        sl = tuple(slice(c, c + n - 1) for c, n in zip(corner[::-1], arr.shape[:nd]))
        corners.append(arr[sl])
    stack = np.stack(corners)
    ok = np.all((stack.min(axis=0) <= 0) & (stack.max(axis=0) >= 0), axis=-1)
    # back to (ix, iy[, iz]) lower-corner indices
    return np.argwhere(ok)[:, ::-1]


def _cell_eval(corner_vals, t):
    # multilinear interpolant of one cell at local coordinates t (may leave [0,1])
    nd = len(t)
    out = 0.0
    for corner, val in zip(itertools.product((0, 1), repeat=nd), corner_vals):
        w = 1.0
        for c, ti in zip(corner, t):
            w *= ti if c else 1.0 - ti
        out = out + w * val
    return out


def _newton_in_cell(corner_vals, nd, iters, zero_tol, fd_step=1e-4):
    t = np.full(nd, 0.5)
    val = _cell_eval(corner_vals, t)
    for _ in range(iters):
        if np.linalg.norm(val) < zero_tol:
            break
        J = np.empty((len(val), nd))
        for j in range(nd):
            e = np.zeros(nd)
            e[j] = fd_step
            J[:, j] = (_cell_eval(corner_vals, t + e) - _cell_eval(corner_vals, t - e)) / (2 * fd_step)
        step = np.linalg.lstsq(J, -val, rcond=None)[0]
        norm0 = np.linalg.norm(val)
        lam = 1.0
        while True:
            trial = np.clip(t + lam * step, 0.0, 1.0)
            tval = _cell_eval(corner_vals, trial)
            if np.linalg.norm(tval) < norm0 or lam < 1e-4:
                break
            lam *= 0.5
        if np.array_equal(trial, t):
            break
        t, val = trial, tval
    return t, val


def detect_critical_points(f: GridVectorField, zero_tolerance=None, refine_iters=50,
                           classify=True) -> list[CriticalPoint]:
    """Zeros of the multilinear interpolant of ``f``.

    Cells whose corners bracket zero in every component are refined by damped
    Newton from the cell centre; a result is kept when its speed is below
    ``zero_tolerance`` (default 1e-9 times the largest node speed) and it lies
    in the cell.  Points closer than half a cell width are merged.
    """
    dom = f.domain
    nd = dom.ndim
    if zero_tolerance is None:
        zero_tolerance = 1e-9 * max(float(np.max(np.linalg.norm(f.data, axis=1))), 1e-3)
    strides = np.cumprod((1,) + dom.dims[:-1])
    found = []
    for cell in _candidate_cells(f):
        idx = [int(((cell + np.asarray(c)) * strides).sum()) for c in itertools.product((0, 1), repeat=nd)]
        t, val = _newton_in_cell(f.data[idx], nd, refine_iters, zero_tolerance)
        if np.linalg.norm(val) >= zero_tolerance:
            continue
        if np.any(t < -1e-6) or np.any(t > 1 + 1e-6):
            continue
        pos = dom.lo + (cell + t) * dom.spacing
        cells_pos = pos / dom.spacing
        if any(np.linalg.norm(cells_pos - q / dom.spacing) < 0.5 for q in found):
            continue
        found.append(pos)
    out = []
    for pos in found:
        J = interpolant_jacobian(f, pos)
        kind = classify_critical_point(J) if classify else "degenerate"
        out.append(CriticalPoint(pos, kind, J))
    return out


def variability_field(points, domain: DomainSpec, clamp_radius=None) -> ScalarField:
    """Sum over critical points of ``1 / max(distance, clamp_radius)`` at every node.

    ``points`` pools detections from all realizations; ``clamp_radius``
    defaults to half the smallest grid spacing.
    """
    if clamp_radius is None:
        clamp_radius = 0.5 * float(np.min(domain.spacing))
    if not clamp_radius > 0:
        raise ValueError("clamp_radius must be positive")
    nodes = grid_nodes(domain)
    acc = np.zeros(len(nodes))
    pts = np.asarray([getattr(p, "position", p) for p in points], dtype=np.float64).reshape(-1, domain.ndim)
    for c in pts:
        acc += 1.0 / np.maximum(np.linalg.norm(nodes - c, axis=1), clamp_radius)
    return ScalarField(domain, acc)


def random_seeds(domain: DomainSpec, count, seed=0) -> np.ndarray:
    """``count`` seed points drawn uniformly inside the domain."""
    rng = np.random.default_rng(seed)
    return domain.lo + rng.random((count, domain.ndim)) * (domain.hi - domain.lo)
