import numpy as np
import pytest

from stripflow import (Edge, EdgeCoefficients, Fiber, MetricGraph, Profile,
                       StripComplex, Vertex)


def unit_coefficients(n: int = 0) -> EdgeCoefficients:
    return EdgeCoefficients(phi=Profile.constant(1.0), psi=Profile.constant(1.0), n=n)


def path_graph(n_edges: int, length: float = 1.0) -> MetricGraph:
    verts = [Vertex(i, boundary=(i in (0, n_edges))) for i in range(n_edges + 1)]
    edges = [Edge(i, i, i + 1, length) for i in range(n_edges)]
    return MetricGraph(verts, edges)


def path_complex(n_edges: int = 1, fiber: Fiber | None = None,
                 length: float = 1.0) -> StripComplex:
    g = path_graph(n_edges, length)
    fiber = fiber or Fiber("point")
    coeffs = {e.id: unit_coefficients(fiber.dimension) for e in g.edges}
    return StripComplex(g, fiber, coeffs)


def star_complex(n_leaves: int = 3) -> StripComplex:
    verts = [Vertex(0)] + [Vertex(i, boundary=True) for i in range(1, n_leaves + 1)]
    edges = [Edge(i, 0, i + 1, 1.0) for i in range(n_leaves)]
    g = MetricGraph(verts, edges)
    coeffs = {e.id: unit_coefficients(0) for e in g.edges}
    return StripComplex(g, Fiber("point"), coeffs)


@pytest.fixture
def rng():
    return np.random.default_rng(20250809)
