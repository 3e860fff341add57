import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stripflow import (Edge, MetricGraph, Profile, Vertex, build_tree,
                       completeness_indicator, edge_exhaustion, graph_distance,
                       treebolic_coefficients)
from stripflow.errors import ParameterError
from conftest import path_graph, unit_coefficients


class TestBuildTree:
    def test_edge_lengths(self):
        g = build_tree(2, 2.0, -1, 1)
        lengths = sorted({round(e.length, 12) for e in g.edges})
        assert lengths == [0.5, 1.0]

    def test_p1_degenerates_to_path(self):
        # one vertex per level between k_min and k_max, no branching
        g = build_tree(1, 2.0, -1, 1)
        assert len(g.vertices) == 3
        assert len(g.edges) == 2
        assert all(g.degree(v.id) <= 2 for v in g.vertices)

    def test_counts_and_degrees(self):
        g = build_tree(2, 2.0, 0, 2)
        assert len(g.vertices) == 7
        assert len(g.edges) == 6
        interior_level1 = [v for v in g.vertices if v.level == 1]
        assert all(g.degree(v.id) == 3 for v in interior_level1)

    def test_tree_relation(self):
        for p, depth in ((1, 4), (2, 3), (3, 2)):
            g = build_tree(p, 1.5, 0, depth)
            assert len(g.edges) == len(g.vertices) - 1

    def test_boundary_flags_and_chart(self):
        g = build_tree(2, 2.0, -2, 1)
        for v in g.vertices:
            assert v.boundary == (v.level in (-2, 1))
        for e in g.edges:
            lo, hi = e.sigma_range
            assert lo == pytest.approx(2.0 ** (e.level - 1))
            assert hi == pytest.approx(2.0**e.level)

    @pytest.mark.parametrize("p,q,kmin,kmax", [(0, 2.0, 0, 1), (2, 1.0, 0, 1),
                                               (2, 2.0, 1, 1), (2, 2.0, 2, 0)])
    def test_parameter_errors(self, p, q, kmin, kmax):
        with pytest.raises(ParameterError):
            build_tree(p, q, kmin, kmax)


class TestGraphDistance:
    def test_identity(self):
        g = path_graph(3)
        assert graph_distance(g, (1, 0.25), (1, 0.25)) == 0.0

    def test_single_edge(self):
        g = path_graph(1, length=2.5)
        assert graph_distance(g, (0, 0.0), (0, 2.5)) == pytest.approx(2.5)

    def test_star_leaves(self):
        verts = [Vertex(0)] + [Vertex(i, boundary=True) for i in (1, 2, 3)]
        edges = [Edge(i, 0, i + 1, 1.0) for i in range(3)]
        g = MetricGraph(verts, edges)
        assert graph_distance(g, 1, 2) == pytest.approx(2.0)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 5), st.data())
    def test_metric_axioms_on_random_tree(self, depth, data):
        g = build_tree(2, 1.7, 0, depth)
        pts = []
        for _ in range(3):
            e = data.draw(st.sampled_from(g.edges))
            s = data.draw(st.floats(0.0, 1.0)) * e.length
            pts.append((e.id, s))
        a, b, c = pts
        dab = graph_distance(g, a, b)
        assert dab == pytest.approx(graph_distance(g, b, a), abs=1e-12)
        assert dab <= graph_distance(g, a, c) + graph_distance(g, c, b) + 1e-12


class TestCompleteness:
    def test_treebolic_profile_complete_both_ways(self):
        for q in (1.5, 2.0, 3.0):
            g = build_tree(2, q, -1, 1)
            coeffs = {e.id: treebolic_coefficients(e.level, q, 0.0, 1.0, 1)
                      for e in g.edges}
            reports = completeness_indicator(g, coeffs)
            assert reports and all(r.complete for r in reports)
            # per-level metric length of sigma^-2 is log q exactly
            for r in reports:
                assert r.first_integral == pytest.approx(np.log(q), rel=1e-12)

    def test_shrinking_edges_incomplete_downward(self):
        g = build_tree(2, 2.0, -1, 1)
        coeffs = {e.id: unit_coefficients(0) for e in g.edges}
        reports = {r.vertex: r for r in completeness_indicator(g, coeffs)}
        root = g.tree["root"]
        assert reports[root].complete is False  # geometric series of lengths
        top = [v.id for v in g.vertices if v.level == 1][0]
        assert reports[top].complete is True

    def test_unit_edges_complete(self):
        g = path_graph(3)
        coeffs = {e.id: unit_coefficients(0) for e in g.edges}
        assert all(r.complete for r in completeness_indicator(g, coeffs))

    def test_tabulated_reports_unknown(self):
        g = path_graph(2)
        tab = Profile.tabulated([0.0, 1.0], [1.0, 2.0])
        from stripflow import EdgeCoefficients
        coeffs = {e.id: EdgeCoefficients(phi=tab, psi=tab, n=0) for e in g.edges}
        assert all(r.complete is None for r in completeness_indicator(g, coeffs))


class TestEdgeExhaustion:
    def test_origin_and_far_endpoint(self):
        g = path_graph(3)
        rho = edge_exhaustion(g, 0.1, origin=0)
        assert rho.vertex_values[0] == 0.0
        assert 3.0 - 12 * 0.1 <= rho.vertex_values[3] <= 3.0

    def test_slope_bound_and_vertex_flatness(self):
        g = build_tree(2, 2.0, 0, 2)
        rho = edge_exhaustion(g, 0.05, origin=0)
        for e in g.edges:
            s = np.linspace(0.0, e.length, 301)
            vals = np.asarray(rho.value(e.id, s))
            assert np.abs(np.diff(vals) / np.diff(s)).max() <= 1.0 + 1e-8
            assert np.ptp(vals[s <= 0.05]) == 0.0
            assert np.ptp(vals[s >= e.length - 0.05]) == 0.0

    def test_flat_edge_when_endpoint_values_equal(self):
        # both leaves of a symmetric star have equal rho_*, so a rung between
        # them would be flat; emulate with a triangle-free cycle graph
        verts = [Vertex(0), Vertex(1), Vertex(2)]
        edges = [Edge(0, 0, 1, 1.0), Edge(1, 0, 2, 1.0), Edge(2, 1, 2, 1.0)]
        g = MetricGraph(verts, edges)
        rho = edge_exhaustion(g, 0.05, origin=0)
        s = np.linspace(0.0, 1.0, 101)
        vals = np.asarray(rho.value(2, s))
        assert np.ptp(vals) == 0.0  # reduced weight integrates to zero

    def test_epsilon_too_large(self):
        g = path_graph(2)
        with pytest.raises(ParameterError):
            edge_exhaustion(g, 0.2, origin=0)


def test_serialization_roundtrip():
    g = build_tree(2, 2.0, -1, 2)
    doc = g.to_dict()
    g2 = MetricGraph.from_dict(doc)
    assert g2.to_dict() == doc
    assert graph_distance(g, 0, 3) == graph_distance(g2, 0, 3)
