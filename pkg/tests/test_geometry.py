import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curveflow.anisotropy import Isotropic, KFold
from curveflow.errors import DegenerateSegment, DimensionMismatch, SelfIntersectingCurve, TopologyMismatch
from curveflow.geometry import (
    PolyCurve,
    Topology,
    arc_length_interpolate,
    enclosed_area,
    interface_energy,
    load_curve,
    manifold_distance,
    mass_lumped_inner,
    mesh_metrics,
    save_curve,
    segment_frames,
)

from .oracles import monte_carlo_area, regular_polygon

UNIT_SQUARE = [(0, 0), (0, 1), (1, 1), (1, 0)]


def square(offset=(0.0, 0.0), side=1.0):
    pts = np.array(UNIT_SQUARE, dtype=float) * side + np.asarray(offset)
    return PolyCurve.closed(pts)


def rectangle(w=4.0, h=1.0):
    return PolyCurve.closed([(0, 0), (0, h), (w, h), (w, 0)])


class TestPolyCurve:
    def test_clockwise_input_kept(self):
        c = square()
        np.testing.assert_array_equal(c.nodes, np.array(UNIT_SQUARE, dtype=float))

    def test_counter_clockwise_input_reversed(self):
        c = PolyCurve.closed(UNIT_SQUARE[::-1])
        assert enclosed_area(c) == pytest.approx(1.0)

    def test_open_endpoints_must_touch_substrate(self):
        with pytest.raises(ValueError):
            PolyCurve.open([(0, 0.1), (0.5, 1), (1, 0)])

    def test_open_reversed_so_left_comes_first(self):
        c = PolyCurve.open([(1, 0), (0.5, 1), (0, 0)])
        assert c.x_l == 0.0 and c.x_r == 1.0

    def test_bad_shape(self):
        with pytest.raises(DimensionMismatch):
            PolyCurve.closed(np.zeros((4, 3)))

    def test_round_trip_json(self, tmp_path):
        c = PolyCurve.closed(regular_polygon(7, 1.3))
        path = tmp_path / "c.json"
        save_curve(c, path)
        back = load_curve(path)
        np.testing.assert_array_equal(back.nodes, c.nodes)
        assert json.loads(path.read_text())["topology"] == "closed"


class TestSegmentFrames:
    def test_unit_square_first_segment(self):
        f = segment_frames(square())
        assert f.theta[0] == pytest.approx(math.pi / 2)
        np.testing.assert_allclose(f.normal[0], [-1.0, 0.0], atol=1e-15)

    def test_horizontal_segment(self):
        c = PolyCurve.open([(0, 0), (1, 0), (1, 1e-3), (2, 0)])
        f = segment_frames(c)
        assert f.theta[0] == 0.0
        np.testing.assert_array_equal(f.tangent[0], [1.0, 0.0])
        np.testing.assert_array_equal(f.normal[0], [0.0, 1.0])

    def test_coincident_nodes(self):
        with pytest.raises(DegenerateSegment):
            segment_frames(PolyCurve.closed([(0, 0), (0, 1), (0, 1), (1, 0)]))

    @given(st.integers(3, 40), st.floats(-3.0, 3.0))
    @settings(max_examples=40, deadline=None)
    def test_frame_invariants_and_rotation(self, n, alpha):
        rng = np.random.default_rng(n)
        base = regular_polygon(n, 1.0) * (1 + 0.2 * rng.random((n, 1)))
        c = PolyCurve.closed(base)
        f = segment_frames(c)
        np.testing.assert_allclose(np.hypot(*f.tangent.T), 1.0, atol=1e-12)
        np.testing.assert_allclose(np.einsum("ij,ij->i", f.tangent, f.normal), 0.0, atol=1e-12)
        np.testing.assert_allclose(np.column_stack([np.cos(f.theta), np.sin(f.theta)]), f.tangent, atol=1e-12)
        assert np.all(f.theta > -math.pi) and np.all(f.theta <= math.pi)

        rot = np.array([[math.cos(alpha), -math.sin(alpha)], [math.sin(alpha), math.cos(alpha)]])
        g = segment_frames(PolyCurve(Topology.CLOSED, c.nodes @ rot.T))
        np.testing.assert_allclose(g.length, f.length, rtol=1e-12)
        shift = np.angle(np.exp(1j * (g.theta - f.theta - alpha)))
        np.testing.assert_allclose(shift, 0.0, atol=1e-10)

    def test_normals_point_outward(self):
        c = PolyCurve.closed(regular_polygon(32, 2.0))
        f = segment_frames(c)
        mid = 0.5 * (c.nodes + np.roll(c.nodes, -1, axis=0))
        assert np.all(np.einsum("ij,ij->i", mid, f.normal) > 0)


class TestArea:
    def test_unit_square(self):
        assert enclosed_area(square()) == 1.0

    def test_rectangle(self):
        assert enclosed_area(rectangle()) == 4.0

    def test_semicircle_on_substrate(self):
        n = 512
        phi = np.linspace(math.pi, 0.0, n + 1)
        pts = np.column_stack([np.cos(phi), np.sin(phi)])
        pts[[0, -1], 1] = 0.0
        assert enclosed_area(PolyCurve.open(pts)) == pytest.approx(math.pi / 2, abs=1e-4)

    @given(st.floats(-50, 50), st.floats(-50, 50))
    def test_translation_invariant(self, dx, dy):
        c = PolyCurve.closed(regular_polygon(9, 1.5))
        assert enclosed_area(c.translated(dx, dy)) == pytest.approx(enclosed_area(c), rel=1e-10, abs=1e-10)

    def test_reversal_negates_raw_traversal(self):
        nodes = np.array(UNIT_SQUARE, dtype=float)
        fwd = enclosed_area(PolyCurve(Topology.CLOSED, nodes))
        back = enclosed_area(PolyCurve(Topology.CLOSED, nodes[::-1]))
        assert fwd == -back == 1.0


class TestEnergy:
    def test_isotropic_perimeter(self):
        assert interface_energy(square(), Isotropic()) == pytest.approx(4.0)

    def test_kfold_square(self):
        assert interface_energy(square(), KFold(1 / 17, 4)) == pytest.approx(72 / 17, rel=1e-14)

    def test_open_substrate_term(self):
        c = PolyCurve.open([(0, 0), (0, 1), (4, 1), (4, 0)])
        sigma = -math.sqrt(2) / 2
        assert interface_energy(c, Isotropic(), sigma) == pytest.approx(6.0 + 2 * math.sqrt(2), rel=1e-14)

    def test_sigma_ignored_when_closed(self):
        assert interface_energy(square(), Isotropic(), 0.7) == pytest.approx(4.0)


class TestMassLumped:
    def test_constants_give_length(self):
        c = rectangle()
        n = c.n_nodes
        assert mass_lumped_inner(c, np.ones(n), np.ones(n)) == pytest.approx(10.0)

    def test_trapezoid_reduction(self):
        c = PolyCurve.closed(regular_polygon(11, 1.0))
        u = np.random.default_rng(3).normal(size=11)
        L = np.hypot(*c.segment_vectors().T)
        expected = np.sum(L * (u + np.roll(u, -1)) / 2)
        assert mass_lumped_inner(c, u, np.ones(11)) == pytest.approx(expected, rel=1e-13)

    def test_segment_constant_data(self):
        c = rectangle()
        L = np.array([1.0, 4.0, 1.0, 4.0])
        w = np.array([1.0, 2.0, 3.0, 4.0])
        assert mass_lumped_inner(c, w, np.ones(4), u_kind="segment") == pytest.approx(np.sum(L * w))

    @given(st.integers(3, 30), st.integers(0, 2**31))
    @settings(max_examples=30)
    def test_symmetric_and_positive(self, n, seed):
        rng = np.random.default_rng(seed)
        c = PolyCurve.closed(regular_polygon(n, 1.0))
        u, v = rng.normal(size=(2, n, 2))
        assert mass_lumped_inner(c, u, v) == pytest.approx(mass_lumped_inner(c, v, u), rel=1e-12, abs=1e-14)
        assert mass_lumped_inner(c, u, u) > 0
        assert mass_lumped_inner(c, np.zeros(n), np.zeros(n)) == 0.0

    def test_shape_mismatch(self):
        c = rectangle()
        with pytest.raises(DimensionMismatch):
            mass_lumped_inner(c, np.ones(4), np.ones(5))


class TestMeshMetrics:
    def test_regular_polygon_ratio_exact(self):
        assert mesh_metrics(square()).ratio == 1.0
        hexagon = PolyCurve.closed(regular_polygon(6, 1.0))
        assert mesh_metrics(hexagon).ratio == pytest.approx(1.0, abs=1e-15)

    def test_rectangle_corner_nodes(self):
        assert mesh_metrics(rectangle()).ratio == 4.0

    def test_subdivided_rectangle(self):
        c = arc_length_interpolate(rectangle(), 640)
        r = mesh_metrics(c).ratio
        assert 1.0 <= r <= 1.01


class TestManifoldDistance:
    def test_identical(self):
        c = PolyCurve.closed(regular_polygon(17, 1.0))
        assert manifold_distance(c, c) == 0.0

    def test_disjoint(self):
        assert manifold_distance(square(), square((2, 0))) == pytest.approx(2.0)

    def test_half_overlap(self):
        assert manifold_distance(square(), square((0.5, 0))) == pytest.approx(1.0)

    def test_reindexing_invariant(self):
        c = PolyCurve.closed(regular_polygon(20, 1.0))
        shifted = PolyCurve.closed(np.roll(c.nodes, 7, axis=0))
        other = square((0.3, -0.2))
        assert manifold_distance(c, other) == pytest.approx(manifold_distance(shifted, other), rel=1e-12)

    def test_topology_mismatch(self):
        with pytest.raises(TopologyMismatch):
            manifold_distance(square(), PolyCurve.open([(0, 0), (0.5, 1), (1, 0)]))

    def test_self_intersecting(self):
        bowtie = PolyCurve(Topology.CLOSED, np.array([(0, 0), (1, 1), (1, 0), (0, 1)], dtype=float))
        with pytest.raises(SelfIntersectingCurve):
            manifold_distance(bowtie, square())

    def test_nonconvex_against_monte_carlo(self):
        # L-shaped region against a shifted square
        ell = PolyCurve.closed([(0, 0), (0, 2), (1, 2), (1, 1), (2, 1), (2, 0)])
        sq = square((0.5, 0.5), 1.2)
        mc = monte_carlo_area(ell, sq, samples=400_000, seed=11)
        assert manifold_distance(ell, sq) == pytest.approx(mc, abs=0.02)

    def test_open_regions(self):
        a = PolyCurve.open([(0, 0), (0, 1), (2, 1), (2, 0)])
        b = PolyCurve.open([(1, 0), (1, 1), (3, 1), (3, 0)])
        assert manifold_distance(a, b) == pytest.approx(2.0)

    @given(st.lists(st.tuples(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.3, 2.0)), min_size=3, max_size=3))
    @settings(max_examples=40, deadline=None)
    def test_metric_properties(self, params):
        curves = [PolyCurve.closed(regular_polygon(12, r) + (x, y)) for x, y, r in params]
        a, b, c = curves
        assert manifold_distance(a, b) == pytest.approx(manifold_distance(b, a), rel=1e-12, abs=1e-12)
        assert manifold_distance(a, c) <= manifold_distance(a, b) + manifold_distance(b, c) + 1e-10


class TestArcLength:
    def test_rectangle_unit_spacing(self):
        c = arc_length_interpolate(rectangle(), 10)
        np.testing.assert_allclose(np.hypot(*c.segment_vectors().T), 1.0, atol=1e-14)

    def test_identity_on_uniform_curve(self):
        c = rectangle(1.0, 1.0)
        np.testing.assert_allclose(arc_length_interpolate(c, 4).nodes, c.nodes, atol=1e-15)

    def test_ellipse_equal_lengths(self):
        t = np.linspace(0, 2 * math.pi, 200_001)[:-1]
        dense = np.column_stack([2 * np.cos(-t), 0.7 * np.sin(-t)])
        src = PolyCurve.closed(dense)
        c = arc_length_interpolate(src, 64)
        # Arc-length position of every node along the source, from a lookup table.
        pts = np.vstack([src.nodes, src.nodes[:1]])
        cum = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(pts, axis=0).T))])
        d2 = ((c.nodes[:, None, :] - pts[None, :-1, :]) ** 2).sum(axis=2)
        k = d2.argmin(axis=1)
        behind = np.einsum("ij,ij->i", c.nodes - pts[k], pts[k + 1] - pts[k]) < 0
        k = np.where(behind, k - 1, k) % (len(pts) - 1)
        s = cum[k] + np.hypot(*(c.nodes - pts[k]).T)
        assert np.max(np.abs(np.diff(s) - cum[-1] / 64)) < 1e-8

    def test_open_endpoints_exact(self):
        src = np.array([(-1.5, 0.0), (-1.5, 1.0), (1.5, 1.0), (1.5, 0.0)])
        c = arc_length_interpolate(src, 10, Topology.OPEN)
        np.testing.assert_array_equal(c.nodes[[0, -1]], src[[0, -1]])

    def test_too_fine_for_source(self):
        with pytest.raises(DegenerateSegment):
            arc_length_interpolate(np.array([(0.0, 0.0), (0.0, 0.0), (0.0, 0.0)]), 3, Topology.CLOSED)
