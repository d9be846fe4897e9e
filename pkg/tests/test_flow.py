import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uqfield.errors import EmptyBundle, NonSquare, OutOfDomain, SeedOutOfDomain
from uqfield.field import DomainSpec, GridVectorField, from_function, generate_analytic, grid_nodes
from uqfield.flow import (Streamline, aggregate_streamlines, classify_critical_point, default_step,
                          detect_critical_points, random_seeds, rk4_step, trace_realizations,
                          trace_streamline, variability_field)
from uqfield.uq import FieldRealizationSet


def rotation(q):
    return np.array([-q[1], q[0]])


def line(points, seed_index=0):
    return Streamline(np.asarray(points, dtype=float), seed_index)


# ---------------------------------------------------------------- RK4


def test_rk4_constant_field():
    out = rk4_step(lambda q: np.array([1.0, 0.0]), [0.0, 0.0], 0.1)
    np.testing.assert_allclose(out, [0.1, 0.0], rtol=0, atol=1e-15)


def test_rk4_rotation_oracle():
    out = rk4_step(rotation, [1.0, 0.0], 0.01)
    assert np.max(np.abs(out - [math.cos(0.01), math.sin(0.01)])) < 1e-9


def test_rk4_zero_field():
    assert np.array_equal(rk4_step(lambda q: np.zeros(2), [0.3, 0.4], 0.5), [0.3, 0.4])


def test_rk4_rejects_exit():
    dom = DomainSpec((3, 3), (0, 0), (1, 1))
    with pytest.raises(OutOfDomain):
        rk4_step(lambda q: np.array([1.0, 0.0]), [0.95, 0.5], 0.1, dom)


def quarter_turn_error(n):
    h = (math.pi / 2) / n
    p = np.array([1.0, 0.0])
    for _ in range(n):
        p = rk4_step(rotation, p, h)
    return np.linalg.norm(p - [0.0, 1.0])


def test_rk4_fourth_order():
    errs = [quarter_turn_error(n) for n in (4, 8, 16, 32)]
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    assert all(8 <= r <= 32 for r in ratios), ratios


def test_full_period_returns():
    h = 2 * math.pi / 1000
    s = trace_streamline(rotation, [1.0, 0.0], h=h, max_steps=1000)
    assert s.termination["forward"] == "max_steps"
    assert np.linalg.norm(s.points[-1] - [1.0, 0.0]) < 1e-4


# ---------------------------------------------------------------- tracing


def test_trace_constant_field_counts():
    dom = DomainSpec((11, 11), (0, 0), (1, 1))
    s = trace_streamline(lambda q: np.array([1.0, 0.0]), [0.5, 0.5], h=0.1, domain=dom)
    assert len(s) == 11
    assert s.n_forward == 5 and s.n_backward == 5
    assert s.termination == {"forward": "domain_exit", "backward": "domain_exit"}
    np.testing.assert_allclose(s.points[:, 0], np.linspace(0, 1, 11), atol=1e-12)
    np.testing.assert_array_equal(s.seed, [0.5, 0.5])


def test_trace_stagnation_at_center():
    f = generate_analytic("center", DomainSpec((5, 5), (-1, -1), (1, 1)))
    s = trace_streamline(f, [0.0, 0.0])
    assert len(s) == 1
    assert s.termination == {"forward": "zero_velocity", "backward": "zero_velocity"}


def test_trace_zero_steps():
    s = trace_streamline(rotation, [1.0, 0.0], h=0.1, max_steps=0)
    assert len(s) == 1 and s.seed_index == 0


def test_trace_seed_outside():
    f = generate_analytic("center", DomainSpec((5, 5), (-1, -1), (1, 1)))
    with pytest.raises(SeedOutOfDomain):
        trace_streamline(f, [2.0, 0.0])
    with pytest.raises(ValueError):
        trace_streamline(f, [0.5, 0.0], h=0.0)


def test_trace_points_stay_in_domain():
    dom = DomainSpec((9, 9), (-1, -1), (1, 1))
    f = generate_analytic("saddle", dom)
    s = trace_streamline(f, [0.1, 0.05], max_steps=5000)
    assert np.all(s.points >= dom.lo - 1e-9) and np.all(s.points <= dom.hi + 1e-9)
    assert s.termination["forward"] == "domain_exit"
    assert default_step(dom) == 0.0625


@pytest.mark.parametrize("kind,dims", [("center", (9, 9)), ("saddle", (9, 7)), ("tornado_swirl_3d", (6, 6, 6))])
def test_batched_trace_matches_scalar(kind, dims, rng):
    d = len(dims)
    dom = DomainSpec(dims, (-1,) * d, (1,) * d)
    base = generate_analytic(kind, dom).data
    fields = [GridVectorField(dom, base + 0.05 * rng.normal(size=base.shape)) for _ in range(4)]
    seed = np.full(d, 0.3)
    batched = trace_realizations(FieldRealizationSet.from_fields(fields), seed, max_steps=200)
    for f, b in zip(fields, batched):
        s = trace_streamline(f, seed, max_steps=200)
        assert s.termination == b.termination
        assert s.seed_index == b.seed_index
        np.testing.assert_allclose(b.points, s.points, rtol=0, atol=1e-12)


def test_batched_trace_accepts_list_and_checks_seed():
    dom = DomainSpec((5, 5), (-1, -1), (1, 1))
    f = generate_analytic("center", dom)
    assert len(trace_realizations([f, f], [0.5, 0.0], max_steps=3)) == 2
    with pytest.raises(SeedOutOfDomain):
        trace_realizations([f], [5.0, 0.0])


# ---------------------------------------------------------------- aggregation


def test_aggregate_identical():
    pts = np.cumsum(np.ones((6, 2)), axis=0) * 0.1
    b = aggregate_streamlines([line(pts, 2)] * 3)
    np.testing.assert_array_equal(b.mean, pts)
    np.testing.assert_array_equal(b.median, pts)
    assert np.all(b.uncertainty == 0)
    assert b.seed_index == 2 and len(b) == 6


def test_aggregate_out_of_bounds_rule():
    long = np.column_stack([np.arange(6) * 0.1, np.zeros(6)])
    short = np.column_stack([np.arange(4) * 0.1, np.full(4, 0.2)])
    b = aggregate_streamlines([line(long), line(short)])
    np.testing.assert_array_equal(b.support[1:], [2, 2, 2, 1, 1])
    np.testing.assert_array_equal(b.mean[4:], long[4:])
    np.testing.assert_allclose(b.mean[:4, 1], 0.1)
    np.testing.assert_allclose(b.uncertainty[1:4], 0.1)
    assert np.all(b.uncertainty[4:] == 0)


def test_aggregate_backward_alignment():
    a = line([[-0.2, 0], [-0.1, 0], [0, 0], [0.1, 0]], 2)
    c = line([[-0.1, 1], [0, 0], [0.1, 1], [0.2, 1]], 1)
    b = aggregate_streamlines([a, c])
    assert b.seed_index == 2
    np.testing.assert_array_equal(b.support, [1, 2, 2, 2, 1])
    np.testing.assert_array_equal(b.mean[0], [-0.2, 0])
    np.testing.assert_array_equal(b.mean[2], [0, 0])


def test_aggregate_median_outlier():
    s1 = line([[0, 0], [1.0, 1.0]])
    s2 = line([[0, 0], [1.1, 0.9]])
    s3 = line([[0, 0], [50.0, -40.0]])
    b = aggregate_streamlines([s1, s2, s3])
    np.testing.assert_array_equal(b.median[1], [1.1, 0.9])


def test_aggregate_single():
    pts = np.random.default_rng(0).normal(size=(7, 3))
    b = aggregate_streamlines([line(pts, 3)])
    assert np.array_equal(b.mean, pts)
    assert np.all(b.uncertainty == 0) and np.all(b.support == 1)


def test_aggregate_matches_naive(rng):
    lines = []
    for _ in range(5):
        nb, nf = rng.integers(0, 4), rng.integers(0, 6)
        lines.append(line(rng.normal(size=(nb + nf + 1, 2)), nb))
    b = aggregate_streamlines(lines)
    for k in range(len(b)):
        step = k - b.seed_index
        alive = [s.points[s.seed_index + step] for s in lines
                 if -s.n_backward <= step <= s.n_forward]
        assert b.support[k] == len(alive)
        alive = np.array(alive)
        np.testing.assert_allclose(b.mean[k], alive.mean(axis=0), atol=1e-14)
        np.testing.assert_allclose(b.uncertainty[k], alive.std(axis=0).sum(), atol=1e-14)
    assert len(b.uncertainty) == len(b.mean)


def test_aggregate_empty():
    with pytest.raises(EmptyBundle):
        aggregate_streamlines([])


# ---------------------------------------------------------------- critical points


@pytest.mark.parametrize("n", [20, 21])
def test_detect_source_at_origin(n):
    f = generate_analytic("source", DomainSpec((n, n), (-1, -1), (1, 1)), c=(0, 0))
    cps = detect_critical_points(f, zero_tolerance=1e-9)
    assert len(cps) == 1
    assert np.linalg.norm(cps[0].position) < 1e-6
    assert cps[0].kind == "source"


def test_detect_constant_field():
    f = GridVectorField(DomainSpec((6, 6), (0, 0), (1, 1)), np.tile([1.0, 0.5], (36, 1)))
    assert detect_critical_points(f) == []


def test_detect_offset_center():
    f = generate_analytic("center", DomainSpec((16, 16), (-1, -1), (1, 1)), c=(0.3, -0.2))
    cps = detect_critical_points(f)
    assert len(cps) == 1
    assert np.linalg.norm(cps[0].position - [0.3, -0.2]) < 1e-6
    assert cps[0].kind == "center"


def test_detect_3d_sink():
    f = generate_analytic("sink", DomainSpec((7, 8, 9), (-1, -1, -1), (1, 1, 1)), c=(0.1, 0.2, -0.3))
    cps = detect_critical_points(f)
    assert len(cps) == 1
    assert np.linalg.norm(cps[0].position - [0.1, 0.2, -0.3]) < 1e-6
    assert cps[0].kind == "sink"


def test_detect_two_zeros_nonlinear():
    # v = (y, x - x^2): saddle at (0, 0), center at (1, 0)
    dom = DomainSpec((31, 21), (-1, -1), (2, 1))
    f = from_function(lambda x: np.column_stack([x[:, 1], x[:, 0] - x[:, 0] ** 2]), dom)
    cps = sorted(detect_critical_points(f), key=lambda c: c.position[0])
    assert [c.kind for c in cps] == ["saddle", "center"]
    np.testing.assert_allclose([c.position for c in cps], [[0, 0], [1, 0]], atol=1e-6)


@pytest.mark.parametrize("J,kind", [
    (np.eye(2), "source"), (np.diag([1.0, -1.0]), "saddle"), ([[0, -1], [1, 0]], "center"),
    (-np.eye(2), "sink"), ([[1, -2], [2, 1]], "spiral_source"), ([[-1, -2], [2, -1]], "spiral_sink"),
    (np.zeros((2, 2)), "degenerate"), (np.diag([1.0, 0.0]), "degenerate"),
    (np.diag([1.0, 2.0, 3.0]), "source"), (np.diag([-1.0, -2.0, 3.0]), "saddle"),
    ([[-0.1, -1, 0], [1, -0.1, 0], [0, 0, -1]], "spiral_sink"),
    ([[0, -1, 0], [1, 0, 0], [0, 0, -1]], "degenerate"),
])
def test_classify_examples(J, kind):
    assert classify_critical_point(J) == kind


def test_classify_non_square():
    with pytest.raises(NonSquare):
        classify_critical_point(np.zeros((2, 3)))
    with pytest.raises(NonSquare):
        classify_critical_point(np.eye(4))


@settings(max_examples=60, deadline=None)
@given(entries=st.lists(st.floats(-10, 10), min_size=4, max_size=4),
       c=st.floats(1e-3, 1e3))
def test_classify_scale_invariant(entries, c):
    J = np.array(entries).reshape(2, 2)
    assert classify_critical_point(c * J) == classify_critical_point(J)


# ---------------------------------------------------------------- variability


def test_variability_examples():
    dom = DomainSpec((5, 5), (0, 0), (4, 4))
    assert np.all(variability_field([], dom).data == 0)
    v = variability_field([[2.0, 0.0]], dom)
    nodes = grid_nodes(dom)
    at = {tuple(n): x for n, x in zip(nodes, v.data)}
    assert at[(0.0, 0.0)] == 0.5
    assert at[(2.0, 0.0)] == 1 / 0.5  # clamped at half a spacing
    assert np.all(v.data >= 0)


def test_variability_additive(rng):
    dom = DomainSpec((6, 7), (-1, -1), (1, 1))
    pts = rng.uniform(-1, 1, (5, 2))
    total = variability_field(pts, dom, clamp_radius=0.05).data
    parts = sum(variability_field([p], dom, clamp_radius=0.05).data for p in pts)
    np.testing.assert_allclose(total, parts, rtol=1e-13)
    with pytest.raises(ValueError):
        variability_field(pts, dom, clamp_radius=0.0)


def test_variability_accepts_critical_points():
    f = generate_analytic("center", DomainSpec((8, 8), (-1, -1), (1, 1)), c=(0.1, 0.1))
    cps = detect_critical_points(f)
    a = variability_field(cps, f.domain).data
    b = variability_field([c.position for c in cps], f.domain).data
    assert np.array_equal(a, b)


def test_random_seeds_inside():
    dom = DomainSpec((3, 3, 3), (0, -1, 2), (1, 1, 5))
    s = random_seeds(dom, 50, seed=3)
    assert s.shape == (50, 3)
    assert np.all(s >= dom.lo) and np.all(s <= dom.hi)
    assert np.array_equal(s, random_seeds(dom, 50, seed=3))
