"""Rectilinear vector-field grids, coordinate normalization, interpolation
and analytic test fields.

Grids are node-centred: node ``i`` along an axis sits at
``physical_min + i * (physical_max - physical_min) / (dim - 1)``.
Node data is stored row-major with the first axis (x) varying fastest,
so a field on ``dims=(nx, ny)`` has node index ``ix + nx * iy``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import DimensionMismatch, DomainMismatch, OutOfDomain

#: Relative slack (in units of the bound width) when testing domain membership.
DOMAIN_TOL = 1e-9


@dataclass(frozen=True)
class DomainSpec:
    dims: tuple[int, ...]
    physical_min: tuple[float, ...]
    physical_max: tuple[float, ...]

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        lo = tuple(float(x) for x in self.physical_min)
        hi = tuple(float(x) for x in self.physical_max)
        if len(dims) not in (2, 3):
            raise DimensionMismatch(f"domain must have 2 or 3 axes, got {len(dims)}")
        if len(lo) != len(dims) or len(hi) != len(dims):
            raise DimensionMismatch("bounds must have one entry per axis")
        if any(n < 2 for n in dims):
            raise ValueError(f"every grid dimension must be >= 2, got {dims}")
        if not all(np.isfinite(lo + hi)) or any(a >= b for a, b in zip(lo, hi)):
            raise ValueError(f"bounds must satisfy min < max per axis, got {lo} / {hi}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "physical_min", lo)
        object.__setattr__(self, "physical_max", hi)

    @classmethod
    def default_bounds(cls, dims) -> "DomainSpec":
        """Domain spanning ``[0, dim - 1]`` per axis (unit node spacing)."""
        dims = tuple(int(n) for n in dims)
        return cls(dims, (0.0,) * len(dims), tuple(float(n - 1) for n in dims))

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.dims))

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.physical_min)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.physical_max)

    @property
    def spacing(self) -> np.ndarray:
        return (self.hi - self.lo) / (np.asarray(self.dims) - 1)

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))

    def contains(self, p, tol=DOMAIN_TOL) -> bool:
        p = np.asarray(p, dtype=float)
        slack = tol * (self.hi - self.lo)
        return bool(np.all(p >= self.lo - slack) and np.all(p <= self.hi + slack))

    def shape(self) -> tuple[int, ...]:
        """Array shape of node data, slowest axis first (``(nz, ny, nx)``)."""
        return self.dims[::-1]


def _check_data(domain, data, width, what):
    data = np.array(data, dtype=np.float64)
    expected = domain.n_nodes * width
    if data.size != expected:
        raise DimensionMismatch(f"{what} needs {expected} values, got {data.size}")
    data = data.reshape((domain.n_nodes, width) if width > 1 else (domain.n_nodes,))
    if not np.all(np.isfinite(data)):
        raise ValueError(f"{what} contains non-finite values")
    data.flags.writeable = False
    return data


@dataclass(frozen=True)
class GridVectorField:
    """Vector field sampled at every node of a rectilinear grid.

    ``data`` has shape ``(n_nodes, components)`` in node order.
    """

    domain: DomainSpec
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        ncomp = self.domain.ndim
        object.__setattr__(self, "data", _check_data(self.domain, self.data, ncomp, "vector field"))

    @property
    def components(self) -> int:
        return self.data.shape[1]

    @property
    def array(self) -> np.ndarray:
        """View of the data as ``(nz, ny, nx, v)`` (or ``(ny, nx, v)``)."""
        return self.data.reshape(self.domain.shape() + (self.components,))

    def __call__(self, p):
        return sample_interpolated(self, p)


@dataclass(frozen=True)
class ScalarField:
    domain: DomainSpec
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "data", _check_data(self.domain, self.data, 1, "scalar field"))

    @property
    def array(self) -> np.ndarray:
        return self.data.reshape(self.domain.shape())


def same_grid(a: DomainSpec, b: DomainSpec) -> bool:
    return (a.dims == b.dims and np.allclose(a.physical_min, b.physical_min, rtol=0, atol=0)
            and np.allclose(a.physical_max, b.physical_max, rtol=0, atol=0))


def require_same_grid(a, b):
    if not same_grid(a.domain, b.domain):
        raise DomainMismatch(f"domains differ: {a.domain} vs {b.domain}")
    if isinstance(a, GridVectorField) and isinstance(b, GridVectorField) \
            and a.components != b.components:
        raise DomainMismatch("component counts differ")


def normalize_coords(p, domain: DomainSpec) -> np.ndarray:
    """Map physical coordinates to ``[-1, 1]`` per axis.

    Accepts a single point of shape ``(d,)`` or a batch ``(n, d)``.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.shape[-1] != domain.ndim:
        raise DimensionMismatch(f"point has {p.shape[-1]} coordinates, domain has {domain.ndim} axes")
    lo, hi = domain.lo, domain.hi
    slack = DOMAIN_TOL * (hi - lo)
    if np.any(p < lo - slack) or np.any(p > hi + slack):
        raise OutOfDomain(f"point {p.tolist()} outside {domain.physical_min}..{domain.physical_max}")
    return 2.0 * (p - lo) / (hi - lo) - 1.0


def denormalize_coords(q, domain: DomainSpec) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return domain.lo + (q + 1.0) * 0.5 * (domain.hi - domain.lo)


def grid_nodes(domain: DomainSpec) -> np.ndarray:
    """Physical coordinates of every node, shape ``(n_nodes, d)``, x fastest."""
    axes = []
    for a, b, n, h in zip(domain.physical_min, domain.physical_max, domain.dims, domain.spacing):
        ax = a + np.arange(n) * h
        ax[-1] = b
        axes.append(ax)
    mesh = np.meshgrid(*axes[::-1], indexing="ij")
    return np.stack([m.ravel() for m in mesh[::-1]], axis=-1)


def _cell_coords(domain, p):
    """Lower-corner index and fractional offset of points ``p`` (n, d)."""
    t = (p - domain.lo) / domain.spacing
    dims = np.asarray(domain.dims)
    i0 = np.clip(np.floor(t).astype(np.int64), 0, dims - 2)
    frac = np.clip(t - i0, 0.0, 1.0)
    return i0, frac


def _interp(domain, data, p, check=True):
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    if p.shape[-1] != domain.ndim:
        raise DimensionMismatch(f"point has {p.shape[-1]} coordinates, domain has {domain.ndim} axes")
    if check:
        slack = DOMAIN_TOL * (domain.hi - domain.lo)
        bad = np.any((p < domain.lo - slack) | (p > domain.hi + slack), axis=-1)
        if np.any(bad):
            raise OutOfDomain(f"point {p[bad][0].tolist()} outside the domain")
    i0, frac = _cell_coords(domain, p)
    strides = np.cumprod((1,) + domain.dims[:-1])
    out = 0.0
    for corner in itertools.product((0, 1), repeat=domain.ndim):
        c = np.asarray(corner)
        w = np.prod(np.where(c == 1, frac, 1.0 - frac), axis=-1)
        idx = ((i0 + c) * strides).sum(axis=-1)
        out = out + (w[:, None] * data[idx] if data.ndim == 2 else w * data[idx])
    return out


def sample_interpolated(f: GridVectorField, p) -> np.ndarray:
    """Bilinear (2D) / trilinear (3D) interpolation of node vectors.

    ``p`` may be a single point ``(d,)`` (returns ``(v,)``) or a batch ``(n, d)``.
    Raises :class:`OutOfDomain` for points outside the physical bounds.
    """
    single = np.ndim(p) == 1
    out = _interp(f.domain, f.data, p)
    return out[0] if single else out


def sample_scalar(s: ScalarField, p) -> np.ndarray:
    single = np.ndim(p) == 1
    out = _interp(s.domain, s.data, p)
    return out[0] if single else out


# --------------------------------------------------------------------------
# analytic fields

ANALYTIC_KINDS = ("center", "saddle", "source", "sink", "rankine_vortex",
                  "double_gyre_steady", "tornado_swirl_3d")

_AXES_ALLOWED = {
    "center": (2,), "saddle": (2,), "source": (2, 3), "sink": (2, 3),
    "rankine_vortex": (2,), "double_gyre_steady": (2,), "tornado_swirl_3d": (3,),
}


@dataclass(frozen=True)
class AnalyticFieldKind:
    """Analytic field tag plus optional real parameters.

    Parameters by kind (defaults in brackets; ``c`` defaults to the domain centre):

    * center, saddle, source, sink: ``c`` centre point, ``scale`` [1]
    * rankine_vortex: ``c``, ``radius`` core radius [a quarter of the smallest extent],
      ``circulation`` [2*pi]
    * double_gyre_steady: ``amplitude`` [0.1]; gyres repeat with unit period in
      normalized units of the x extent over two cells
    * tornado_swirl_3d: ``c`` (x, y of the axis, z ignored), ``swirl`` [1],
      ``inflow`` [0.2]
    """

    tag: str
    params: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.tag not in ANALYTIC_KINDS:
            raise ValueError(f"unknown analytic field kind {self.tag!r}; choose from {ANALYTIC_KINDS}")
        object.__setattr__(self, "params", dict(self.params))


def analytic_function(kind: AnalyticFieldKind, domain: DomainSpec) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorised ``v(x)`` for ``kind`` on ``domain``; maps ``(n, d)`` to ``(n, d)``."""
    if domain.ndim not in _AXES_ALLOWED[kind.tag]:
        raise DimensionMismatch(f"{kind.tag} is not defined on a {domain.ndim}D domain")
    prm = kind.params
    mid = 0.5 * (domain.lo + domain.hi)
    c = np.asarray(prm.get("c", mid), dtype=float)
    if c.shape != (domain.ndim,):
        raise DimensionMismatch(f"centre must have {domain.ndim} coordinates")
    scale = float(prm.get("scale", 1.0))
    tag = kind.tag

    if tag == "center":
        def fn(x):
            r = x - c
            return scale * np.stack([-r[:, 1], r[:, 0]], axis=-1)
    elif tag == "saddle":
        def fn(x):
            r = x - c
            return scale * np.stack([r[:, 0], -r[:, 1]], axis=-1)
    elif tag in ("source", "sink"):
        sign = 1.0 if tag == "source" else -1.0

        def fn(x):
            return sign * scale * (x - c)
    elif tag == "rankine_vortex":
        radius = float(prm.get("radius", 0.25 * float(np.min(domain.hi - domain.lo))))
        gamma = float(prm.get("circulation", 2 * np.pi))

        def fn(x):
            r = x - c
            rr = np.hypot(r[:, 0], r[:, 1])
            # azimuthal speed divided by radius
            omega = np.where(rr < radius, gamma / (2 * np.pi * radius**2),
                             gamma / (2 * np.pi * np.maximum(rr, radius) ** 2))
            return np.stack([-omega * r[:, 1], omega * r[:, 0]], axis=-1)
    elif tag == "double_gyre_steady":
        amp = float(prm.get("amplitude", 0.1))
        ext = domain.hi - domain.lo

        def fn(x):
            s = 2.0 * (x[:, 0] - domain.lo[0]) / ext[0]
            t = (x[:, 1] - domain.lo[1]) / ext[1]
            u = -np.pi * amp * np.sin(np.pi * s) * np.cos(np.pi * t)
            v = np.pi * amp * np.cos(np.pi * s) * np.sin(np.pi * t)
            return np.stack([u, v], axis=-1)
    else:  # tornado_swirl_3d
        swirl = float(prm.get("swirl", 1.0))
        inflow = float(prm.get("inflow", 0.2))

        def fn(x):
            r = x - c
            u = -swirl * r[:, 1] - inflow * r[:, 0]
            v = swirl * r[:, 0] - inflow * r[:, 1]
            # updraft balancing the radial inflow (divergence free)
            w = 2.0 * inflow * (x[:, 2] - domain.lo[2])
            return np.stack([u, v, w], axis=-1)
    return fn


def from_function(fn: Callable[[np.ndarray], np.ndarray], domain: DomainSpec) -> GridVectorField:
    """Sample a vectorised function ``(n, d) -> (n, d)`` at every grid node."""
    return GridVectorField(domain, fn(grid_nodes(domain)))


def generate_analytic(kind, domain: DomainSpec, **params) -> GridVectorField:
    """Sample an analytic field at every node of ``domain``.

    ``kind`` is an :class:`AnalyticFieldKind` or a tag string, in which case
    ``params`` are forwarded to it.
    """
    if isinstance(kind, str):
        kind = AnalyticFieldKind(kind, params)
    return from_function(analytic_function(kind, domain), domain)
