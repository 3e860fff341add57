"""Metric graphs with per-edge coefficient profiles.

The graph is oriented and loop-free; every edge carries a positive length,
an optional horocycle level tag and an optional global-coordinate origin
``sigma0`` (so that sigma = sigma0 + s maps the local arclength onto the
chart the coefficient profiles live in).
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .cutoffs import ramp_cutoff, ramp_cutoff_integral
from .errors import DomainError, ParameterError
from .profiles import EdgeCoefficients


@dataclass(frozen=True)
class Vertex:
    id: int
    boundary: bool = False
    level: int | None = None


@dataclass(frozen=True)
class Edge:
    id: int
    tail: int
    head: int
    length: float
    level: int | None = None
    sigma0: float | None = None

    def __post_init__(self):
        if self.tail == self.head:
            raise ParameterError(f"edge {self.id} is a loop ({self.tail} -> {self.head})")
        if not self.length > 0:
            raise ParameterError(f"edge {self.id} has non-positive length {self.length}")

    def sigma(self, s):
        """Global coordinate of the local arclength s (identity if no chart)."""
        base = 0.0 if self.sigma0 is None else self.sigma0
        return base + np.asarray(s, dtype=float)

    @property
    def sigma_range(self) -> tuple[float, float]:
        base = 0.0 if self.sigma0 is None else self.sigma0
        return base, base + self.length


class MetricGraph:
    """Connected oriented graph with edge lengths; immutable after construction."""

    def __init__(self, vertices: list[Vertex], edges: list[Edge], tree: dict | None = None):
        self.vertices = list(vertices)
        self.edges = list(edges)
        self.tree = tree
        self._vmap = {v.id: v for v in self.vertices}
        self._emap = {e.id: e for e in self.edges}
        if len(self._vmap) != len(self.vertices):
            raise ParameterError("duplicate vertex ids")
        if len(self._emap) != len(self.edges):
            raise ParameterError("duplicate edge ids")
        adjacency: dict[int, list[int]] = {v.id: [] for v in self.vertices}
        for e in self.edges:
            for v in (e.tail, e.head):
                if v not in adjacency:
                    raise ParameterError(f"edge {e.id} references unknown vertex {v}")
                adjacency[v].append(e.id)
        self.adjacency = adjacency
        self._check_connected()

    def _check_connected(self):
        if not self.vertices:
            raise ParameterError("graph has no vertices")
        seen = {self.vertices[0].id}
        stack = [self.vertices[0].id]
        while stack:
            v = stack.pop()
            for eid in self.adjacency[v]:
                e = self._emap[eid]
                w = e.head if e.tail == v else e.tail
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        if len(seen) != len(self.vertices):
            raise ParameterError("graph is not connected")

    # -- access --------------------------------------------------------------

    def vertex(self, vid: int) -> Vertex:
        try:
            return self._vmap[vid]
        except KeyError:
            raise DomainError(f"unknown vertex {vid}") from None

    def edge(self, eid: int) -> Edge:
        try:
            return self._emap[eid]
        except KeyError:
            raise DomainError(f"unknown edge {eid}") from None

    def incident(self, vid: int) -> list[int]:
        self.vertex(vid)
        return self.adjacency[vid]

    def opposite(self, eid: int, vid: int) -> int:
        e = self.edge(eid)
        if vid == e.tail:
            return e.head
        if vid == e.head:
            return e.tail
        raise DomainError(f"vertex {vid} is not an endpoint of edge {eid}")

    @property
    def min_edge_length(self) -> float:
        return min(e.length for e in self.edges)

    @property
    def boundary_vertices(self) -> list[int]:
        return [v.id for v in self.vertices if v.boundary]

    def degree(self, vid: int) -> int:
        return len(self.incident(vid))

    # tree helpers (valid when built by `build_tree`) --------------------------

    def parent_edge(self, vid: int) -> Edge | None:
        for eid in self.incident(vid):
            e = self.edge(eid)
            if e.head == vid:
                return e
        return None

    def child_edges(self, vid: int) -> list[Edge]:
        return [self.edge(eid) for eid in self.incident(vid) if self.edge(eid).tail == vid]

    # -- serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        doc = {
            "vertices": [
                {"id": v.id, "boundary": v.boundary, **({"level": v.level} if v.level is not None else {})}
                for v in self.vertices
            ],
            "edges": [
                {
                    "id": e.id, "tail": e.tail, "head": e.head, "length": e.length,
                    **({"level": e.level} if e.level is not None else {}),
                    **({"sigma0": e.sigma0} if e.sigma0 is not None else {}),
                }
                for e in self.edges
            ],
        }
        if self.tree is not None:
            doc["tree"] = dict(self.tree)
        return doc

    @staticmethod
    def from_dict(doc: dict) -> "MetricGraph":
        vertices = [Vertex(int(v["id"]), bool(v.get("boundary", False)), v.get("level")) for v in doc["vertices"]]
        edges = [
            Edge(int(e["id"]), int(e["tail"]), int(e["head"]), float(e["length"]),
                 e.get("level"), e.get("sigma0"))
            for e in doc["edges"]
        ]
        return MetricGraph(vertices, edges, doc.get("tree"))


def build_tree(p: int, q: float, k_min: int, k_max: int) -> MetricGraph:
    """Truncated horocyclic tree T_{p,q}.

    Levels run from k_min to k_max; every vertex below the top level has
    exactly p children, and the edge reaching level k has length
    q**(k-1) * (q-1) together with the global chart sigma in [q**(k-1), q**k].
    Vertices on the extreme levels are flagged as truncation boundary.
    """
    if p < 1:
        raise ParameterError(f"branching number p must be >= 1, got {p}")
    if not q > 1:
        raise ParameterError(f"scale q must be > 1, got {q}")
    if k_min >= k_max:
        raise ParameterError(f"need k_min < k_max, got [{k_min}, {k_max}]")

    vertices = [Vertex(0, boundary=True, level=k_min)]
    edges: list[Edge] = []
    frontier = [0]
    for k in range(k_min + 1, k_max + 1):
        next_frontier = []
        for parent in frontier:
            for _ in range(p):
                vid = len(vertices)
                vertices.append(Vertex(vid, boundary=(k == k_max), level=k))
                edges.append(Edge(len(edges), tail=parent, head=vid,
                                  length=q ** (k - 1) * (q - 1.0), level=k,
                                  sigma0=q ** (k - 1)))
                next_frontier.append(vid)
        frontier = next_frontier
    tree = {"p": p, "q": q, "k_min": k_min, "k_max": k_max, "root": 0}
    return MetricGraph(vertices, edges, tree)


# -- points and distance -------------------------------------------------------


def normalize_point(g: MetricGraph, point):
    """Normalize a point spec to (edge_id, s); vertices snap to an incident edge end."""
    if isinstance(point, (int, np.integer)):
        vid = int(point)
        eid = g.incident(vid)[0]
        e = g.edge(eid)
        return (eid, 0.0 if e.tail == vid else e.length)
    eid, s = point
    e = g.edge(int(eid))
    s = float(s)
    if not (0.0 <= s <= e.length + 1e-12):
        raise DomainError(f"coordinate s={s} outside edge {eid} of length {e.length}")
    return (int(eid), min(max(s, 0.0), e.length))


def _vertex_distances(g: MetricGraph, sources: dict[int, float]) -> dict[int, float]:
    dist = {v.id: np.inf for v in g.vertices}
    heap = []
    for vid, d0 in sources.items():
        if d0 < dist[vid]:
            dist[vid] = d0
            heapq.heappush(heap, (d0, vid))
    while heap:
        d, v = heapq.heappop(heap)
        if d > dist[v]:
            continue
        for eid in g.adjacency[v]:
            e = g.edge(eid)
            w = e.head if e.tail == v else e.tail
            nd = d + e.length
            if nd < dist[w]:
                dist[w] = nd
                heapq.heappush(heap, (nd, w))
    return dist


def graph_distance(g: MetricGraph, a, b) -> float:
    """Shortest-path distance between two points of the one-dimensional complex."""
    ea, sa = normalize_point(g, a)
    eb, sb = normalize_point(g, b)
    edge_a, edge_b = g.edge(ea), g.edge(eb)
    best = np.inf
    if ea == eb:
        best = abs(sa - sb)
    dist = _vertex_distances(g, {edge_a.tail: sa, edge_a.head: edge_a.length - sa})
    for vid, offset in ((edge_b.tail, sb), (edge_b.head, edge_b.length - sb)):
        best = min(best, dist[vid] + offset)
    return float(best)


# -- completeness indicator ------------------------------------------------------


@dataclass(frozen=True)
class RayReport:
    vertex: int
    level: int | None
    mode: str                  # "levels" for tree extrapolation, "repeat" otherwise
    first_integral: float | None
    ratio: float | None
    complete: bool | None      # None when the profile is not symbolic


def completeness_indicator(g: MetricGraph, coeffs: dict[int, EdgeCoefficients]) -> list[RayReport]:
    """Per-truncation-ray completeness of the implied infinite extension.

    Sums the metric length integral of sqrt(phi) level by level along the ray
    extending the truncation pattern and classifies the series by its exact
    term ratio; divergence means the extension is metrically complete.
    """
    reports = []
    for vid in g.boundary_vertices:
        v = g.vertex(vid)
        eid = g.incident(vid)[0]
        e = g.edge(eid)
        phi = coeffs[eid].phi
        if not phi.symbolic:
            reports.append(RayReport(vid, v.level, "unknown", None, None, None))
            continue
        tree = g.tree
        if tree is not None and e.level is not None and v.level is not None:
            q = float(tree["q"])
            going_up = v.level == tree["k_max"]
            # first extrapolated level beyond the truncation
            k0 = v.level + 1 if going_up else v.level
            lo, hi = q ** (k0 - 1), q**k0
            first = phi.sqrt_integral(lo, hi)
            step = q if going_up else 1.0 / q
            nxt = phi.sqrt_integral(lo * step, hi * step)
            reports.append(RayReport(vid, v.level, "levels", first,
                                     nxt / first, bool(nxt / first >= 1.0 - 1e-12)))
        else:
            lo, hi = e.sigma_range
            first = phi.sqrt_integral(lo, hi)
            reports.append(RayReport(vid, v.level, "repeat", first, 1.0, first > 0.0))
    return reports


# -- edge-adapted exhaustion -------------------------------------------------------


class EdgeExhaustion:
    """Exhaustion function of the 1D complex, flat near vertices, slope at most 1.

    Built from a per-edge cutoff that vanishes within eps of every vertex and
    a shortest-path accumulation of its integral from the origin; edges whose
    endpoint values cannot absorb the full cutoff integral get the reduced
    weight, so the restriction to any edge is monotone between the endpoint
    values.
    """

    def __init__(self, g: MetricGraph, epsilon: float, origin: int):
        if not 8.0 * epsilon < g.min_edge_length:
            raise ParameterError(
                f"epsilon={epsilon} too large: need 8*epsilon < min edge length {g.min_edge_length}")
        g.vertex(origin)
        self.graph = g
        self.epsilon = float(epsilon)
        self.origin = origin
        self._weights = {e.id: e.length - 3.0 * self.epsilon for e in g.edges}
        dist = {v.id: np.inf for v in g.vertices}
        dist[origin] = 0.0
        heap = [(0.0, origin)]
        while heap:
            d, v = heapq.heappop(heap)
            if d > dist[v]:
                continue
            for eid in g.adjacency[v]:
                w = g.opposite(eid, v)
                nd = d + self._weights[eid]
                if nd < dist[w]:
                    dist[w] = nd
                    heapq.heappush(heap, (nd, w))
        self.vertex_values = dist
        # signed reduction factor per edge; |factor| <= 1 keeps |d rho / d s| <= 1
        self.edge_factor = {
            e.id: (dist[e.head] - dist[e.tail]) / self._weights[e.id] for e in g.edges
        }

    def value(self, eid: int, s):
        e = self.graph.edge(eid)
        base = self.vertex_values[e.tail]
        return base + self.edge_factor[eid] * ramp_cutoff_integral(s, e.length, self.epsilon)

    def slope(self, eid: int, s):
        e = self.graph.edge(eid)
        return self.edge_factor[eid] * ramp_cutoff(s, e.length, self.epsilon)

    def sample(self, points_per_edge: int = 64) -> dict[int, tuple[np.ndarray, np.ndarray]]:
        out = {}
        for e in self.graph.edges:
            s = np.linspace(0.0, e.length, points_per_edge)
            out[e.id] = (s, np.asarray(self.value(e.id, s)))
        return out


def edge_exhaustion(g: MetricGraph, epsilon: float, origin: int) -> EdgeExhaustion:
    """Edge-adapted exhaustion rho_1 with rho_1(origin) = 0; see `EdgeExhaustion`."""
    return EdgeExhaustion(g, epsilon, origin)
