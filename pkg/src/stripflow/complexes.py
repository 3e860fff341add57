"""Strip complexes: metric graph x fiber with coefficients and measure.

A point is (edge, s, x) with s the local arclength and x the fiber
coordinate, or (vertex, x) on a bifurcation manifold.  The treebolic
constructor places the hyperbolic data phi = sigma**-2 and
psi = beta**k * sigma**alpha on the level-k strips of a truncated
horocyclic tree, so that a point (edge at level k, sigma, x) corresponds
to x + i*y in the upper half plane with y = sigma.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cutoffs import smoothstep, unit_cutoff
from .errors import ConfigurationError, DomainError, ParameterError
from .graph import MetricGraph, build_tree
from .profiles import EdgeCoefficients, Profile, treebolic_coefficients

POINT = "point"
CIRCLE = "circle"
INTERVAL = "interval"


@dataclass(frozen=True)
class Fiber:
    kind: str
    length: float = 0.0

    def __post_init__(self):
        if self.kind not in (POINT, CIRCLE, INTERVAL):
            raise ParameterError(f"unknown fiber kind {self.kind!r}")
        if self.kind != POINT and not self.length > 0:
            raise ParameterError("circle/interval fiber needs positive length")

    @property
    def dimension(self) -> int:
        return 0 if self.kind == POINT else 1

    @property
    def x_range(self) -> tuple[float, float]:
        if self.kind == POINT:
            return (0.0, 0.0)
        if self.kind == CIRCLE:
            return (0.0, self.length)
        half = self.length / 2.0
        return (-half, half)

    def contains(self, x: float) -> bool:
        lo, hi = self.x_range
        return lo - 1e-12 <= x <= hi + 1e-12

    def to_dict(self) -> dict:
        return {"kind": self.kind, "L": self.length}

    @staticmethod
    def from_dict(doc: dict) -> "Fiber":
        return Fiber(doc["kind"], float(doc.get("L", 0.0)))


@dataclass(frozen=True)
class PointOnComplex:
    """Either (edge, s, x) inside a strip or (vertex, x) on a bifurcation manifold."""

    x: float = 0.0
    edge: int | None = None
    s: float = 0.0
    vertex: int | None = None

    @staticmethod
    def on_edge(edge: int, s: float, x: float = 0.0) -> "PointOnComplex":
        return PointOnComplex(edge=int(edge), s=float(s), x=float(x))

    @staticmethod
    def at_vertex(vertex: int, x: float = 0.0) -> "PointOnComplex":
        return PointOnComplex(vertex=int(vertex), x=float(x))


class StripComplex:
    """Product of a metric graph and a fiber, with per-edge coefficients."""

    def __init__(self, graph: MetricGraph, fiber: Fiber,
                 coeffs: dict[int, EdgeCoefficients], treebolic: dict | None = None):
        for e in graph.edges:
            if e.id not in coeffs:
                raise ParameterError(f"edge {e.id} has no coefficients")
            if coeffs[e.id].n != fiber.dimension:
                raise ParameterError(
                    f"edge {e.id}: coefficient fiber dimension {coeffs[e.id].n} "
                    f"!= fiber dimension {fiber.dimension}")
            coeffs[e.id].validate_positive(*e.sigma_range)
        self.graph = graph
        self.fiber = fiber
        self.coeffs = dict(coeffs)
        self.treebolic = treebolic

    # -- point handling -----------------------------------------------------

    def check_point(self, point: PointOnComplex) -> PointOnComplex:
        if not self.fiber.contains(point.x):
            raise DomainError(f"fiber coordinate {point.x} outside {self.fiber}")
        if point.vertex is not None:
            self.graph.vertex(point.vertex)
            return point
        e = self.graph.edge(point.edge)
        if not (-1e-12 <= point.s <= e.length + 1e-12):
            raise DomainError(f"s={point.s} outside edge {point.edge} of length {e.length}")
        return point

    def point_sigma(self, point: PointOnComplex) -> float:
        """Global edge coordinate of a point (vertex points use any incident edge)."""
        if point.vertex is not None:
            eid = self.graph.incident(point.vertex)[0]
            e = self.graph.edge(eid)
            return float(e.sigma(0.0 if e.tail == point.vertex else e.length))
        return float(self.graph.edge(point.edge).sigma(point.s))

    # -- treebolic identification -------------------------------------------

    def to_halfplane(self, point: PointOnComplex) -> tuple[float, float, int]:
        """Map a point to (x, y, v): upper half-plane coordinates plus strip vertex.

        The strip of a level-k edge [v-, v] is {q**(k-1) <= Im z <= q**k} and is
        labeled by its top vertex v.
        """
        if self.treebolic is None:
            raise ConfigurationError("not a treebolic complex")
        point = self.check_point(point)
        if point.vertex is not None:
            return (point.x, self.point_sigma(point), point.vertex)
        e = self.graph.edge(point.edge)
        return (point.x, float(e.sigma(point.s)), e.head)

    def from_halfplane(self, x: float, y: float, v: int) -> PointOnComplex:
        if self.treebolic is None:
            raise ConfigurationError("not a treebolic complex")
        e = self.graph.parent_edge(v)
        if e is None:
            raise DomainError(f"vertex {v} has no strip below it in the truncation")
        lo, hi = e.sigma_range
        if not (lo - 1e-12 <= y <= hi + 1e-12):
            raise DomainError(f"height y={y} outside strip [{lo}, {hi}] of vertex {v}")
        return self.check_point(PointOnComplex.on_edge(e.id, y - lo, x))

    # -- serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        doc = self.graph.to_dict()
        doc["fiber"] = self.fiber.to_dict()
        doc["coefficients"] = {
            str(eid): {"phi": _profile_to_dict(c.phi), "psi": _profile_to_dict(c.psi), "n": c.n}
            for eid, c in self.coeffs.items()
        }
        if self.treebolic is not None:
            doc["treebolic"] = dict(self.treebolic)
        return doc

    @staticmethod
    def from_dict(doc: dict) -> "StripComplex":
        graph = MetricGraph.from_dict(doc)
        fiber = Fiber.from_dict(doc["fiber"])
        coeffs = {
            int(eid): EdgeCoefficients(
                phi=_profile_from_dict(c["phi"]), psi=_profile_from_dict(c["psi"]), n=int(c["n"]))
            for eid, c in doc["coefficients"].items()
        }
        return StripComplex(graph, fiber, coeffs, doc.get("treebolic"))


def _profile_to_dict(p: Profile) -> dict:
    if p.kind == "tabulated":
        arr = np.asarray(p.knots, dtype=float)
        return {"kind": p.kind, "sigmas": arr[:, 0].tolist(), "values": arr[:, 1].tolist()}
    return {"kind": p.kind, "c": p.c, "gamma": p.gamma}


def _profile_from_dict(doc: dict) -> Profile:
    if doc["kind"] == "tabulated":
        return Profile.tabulated(doc["sigmas"], doc["values"])
    if doc["kind"] == "constant":
        return Profile.constant(doc["c"])
    return Profile.power(doc["c"], doc["gamma"])


def build_treebolic(p: int, q: float, alpha: float, beta: float,
                    k_min: int, k_max: int, R: float) -> StripComplex:
    """Truncated treebolic complex HT(p, q) with measure weights (alpha, beta).

    The fiber is the reflecting interval [-R, R]; on a level-k strip the energy
    density is beta**k * sigma**alpha and the mass density beta**k * sigma**(alpha-2).
    """
    if beta <= 0:
        raise ParameterError(f"beta must be positive, got {beta}")
    if R <= 0:
        raise ParameterError(f"fiber half-width R must be positive, got {R}")
    graph = build_tree(p, q, k_min, k_max)
    coeffs = {e.id: treebolic_coefficients(e.level, q, alpha, beta, n=1) for e in graph.edges}
    meta = {"p": p, "q": q, "alpha": alpha, "beta": beta, "R": R}
    return StripComplex(graph, Fiber(INTERVAL, 2.0 * R), coeffs, meta)


def collapse_to_graph_complex(sc: StripComplex) -> StripComplex:
    """The same graph with a point fiber carrying the identical (a, m) pair."""
    coeffs = {}
    for eid, c in sc.coeffs.items():
        if c.n == 0:
            coeffs[eid] = c
        else:
            # keep a and m per unit fiber length: phi unchanged, psi' = a * sqrt(phi)
            coeffs[eid] = EdgeCoefficients(phi=c.phi, psi=c.a * c.phi**0.5, n=0)
    meta = dict(sc.treebolic) if sc.treebolic is not None else None
    return StripComplex(sc.graph, Fiber(POINT), coeffs, meta)


# -- measure -------------------------------------------------------------------


def measure(sc: StripComplex, region, subcells: int = 64) -> float:
    """mu of a union of rectangles (edge_id, s_lo, s_hi, x_lo, x_hi), local coordinates.

    Midpoint quadrature of the mass density over `subcells` pieces per
    rectangle; the fiber factor is exact since the density is fiber-constant.
    """
    total = 0.0
    for cell in region:
        eid, s_lo, s_hi, x_lo, x_hi = cell
        e = sc.graph.edge(int(eid))
        if not (-1e-12 <= s_lo <= s_hi <= e.length + 1e-12):
            raise DomainError(f"cell {cell} outside edge {eid}")
        if s_hi <= s_lo:
            continue
        m = sc.coeffs[e.id].m
        edges_s = np.linspace(s_lo, s_hi, subcells + 1)
        mids = e.sigma(0.5 * (edges_s[:-1] + edges_s[1:]))
        ds = np.diff(edges_s)
        fiber_factor = 1.0 if sc.fiber.dimension == 0 else max(0.0, x_hi - x_lo)
        total += float(np.dot(m(mids), ds)) * fiber_factor
    return total


# -- grid distance and ball volume ----------------------------------------------


def _segment_length(sc: StripComplex, eid: int, s0: float, x0: float,
                    s1: float, x1: float) -> float:
    """Exact metric length of the straight (sigma, x) segment within one strip."""
    e = sc.graph.edge(eid)
    phi = sc.coeffs[eid].phi
    sig0, sig1 = float(e.sigma(s0)), float(e.sigma(s1))
    dx = abs(x1 - x0)
    if sc.fiber.kind == CIRCLE:
        dx = min(dx, sc.fiber.length - dx)
    if sig0 == sig1:
        return float(np.sqrt(phi(sig0))) * dx
    lo, hi = min(sig0, sig1), max(sig0, sig1)
    return phi.sqrt_integral(lo, hi) * float(np.hypot(hi - lo, dx)) / (hi - lo)


def distance(sc: StripComplex, xi: PointOnComplex, zeta: PointOnComplex,
             resolution: int = 32) -> float:
    """Upper approximation of the path metric by shortest grid paths.

    Every candidate is the exact length of an actual rectifiable path: grid
    paths (axis and diagonal segments with exact sqrt(phi) integrals) at the
    requested resolution and all coarser halvings, plus the straight segment
    when both points share a strip.  Taking the minimum over the nested ladder
    keeps the value non-increasing under refinement.
    """
    from .assembly import build_grid
    import scipy.sparse.csgraph as csgraph

    xi = sc.check_point(xi)
    zeta = sc.check_point(zeta)
    if xi == zeta:
        return 0.0
    best = np.inf
    if xi.edge is not None and xi.edge == zeta.edge:
        best = _segment_length(sc, xi.edge, xi.s, xi.x, zeta.s, zeta.x)
    res = max(2, int(resolution))
    while True:
        fiber_nodes = 1 if sc.fiber.dimension == 0 else max(2, res)
        grid = build_grid(sc, nodes_per_edge=max(2, res), fiber_nodes=fiber_nodes)
        w = grid.metric_graph_matrix()
        i0, d0 = grid.attach_point(xi)
        i1, d1 = grid.attach_point(zeta)
        dist = csgraph.dijkstra(w, directed=False, indices=[i0])
        best = min(best, float(dist[0, i1] + d0 + d1))
        if res <= 8:
            break
        res //= 2
    return best


def ball_volume(sc: StripComplex, xi: PointOnComplex, r: float, resolution: int = 32) -> float:
    """mu of the grid cells whose centers lie within grid distance r of xi."""
    from .assembly import build_grid

    if r <= 0:
        return 0.0
    xi = sc.check_point(xi)
    fiber_nodes = 1 if sc.fiber.dimension == 0 else max(2, resolution)
    grid = build_grid(sc, nodes_per_edge=max(2, resolution), fiber_nodes=fiber_nodes)
    w = grid.metric_graph_matrix()
    import scipy.sparse.csgraph as csgraph

    i0, d0 = grid.attach_point(xi)
    dist = csgraph.dijkstra(w, directed=False, indices=[i0])[0] + d0
    return float(np.sum(grid.node_mass[dist <= r]))


# -- treebolic exhaustion ---------------------------------------------------------


class EtaFunction:
    """Smooth homogeneous rescaling of the height: eta(q**k * y) = q**k * eta(y).

    On the base period [1, q] the function is 1 near 1, q near q, and a C^2
    monotone blend in between; flat windows shrink when q is close to 1 so the
    blend interval stays nonempty.
    """

    def __init__(self, q: float):
        if not q > 1:
            raise ParameterError(f"eta needs q > 1, got {q}")
        self.q = float(q)
        self.lo = 1.0 + min(q / 8.0, (q - 1.0) / 4.0)
        self.hi = q - min(1.0 / 8.0, (q - 1.0) / 4.0)

    def _base(self, y):
        t = (np.asarray(y, dtype=float) - self.lo) / (self.hi - self.lo)
        return 1.0 + (self.q - 1.0) * smoothstep(t)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        if np.any(y <= 0):
            raise DomainError("eta is defined for positive heights only")
        k = np.floor(np.log(y) / math.log(self.q))
        scale = self.q**k
        r = y / scale
        # guard the floating-point edges of the period
        too_low = r < 1.0
        k = np.where(too_low, k - 1.0, k)
        scale = np.where(too_low, scale / self.q, scale)
        r = np.where(too_low, r * self.q, r)
        too_high = r >= self.q
        k = np.where(too_high, k + 1.0, k)
        scale = np.where(too_high, scale * self.q, scale)
        r = np.where(too_high, r / self.q, r)
        return scale * self._base(r)


def horocyclic_displacement(x, y):
    """log(1 + (1 + x**2 + y**2) / y): comparable with the hyperbolic distance to i."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.log1p((1.0 + x**2 + y**2) / y)


class TreebolicExhaustion:
    """Strip-adapted exhaustion rho_1 = delta(x + i*eta(y)) + kappa of treebolic space.

    kappa vanishes on the strips over the reference geodesic (first child at
    every level) and grows like the log-height of the subtree detachment point
    elsewhere, so rho_1 is proper along horocycles as well.
    """

    def __init__(self, sc: StripComplex):
        if sc.treebolic is None or sc.graph.tree is None:
            raise DomainError("treebolic exhaustion needs a treebolic complex")
        self.sc = sc
        self.q = float(sc.graph.tree["q"])
        self.eta = EtaFunction(self.q)
        g = sc.graph
        ray = [g.tree["root"]]
        while True:
            children = g.child_edges(ray[-1])
            if not children:
                break
            ray.append(min(children, key=lambda e: e.id).head)
        self.ray = set(ray)
        # deepest reference-ray ancestor of every vertex
        self._conf: dict[int, int] = {}
        for v in g.vertices:
            w = v.id
            while w not in self.ray:
                w = g.parent_edge(w).tail
            self._conf[v.id] = w

    def kappa(self, point: PointOnComplex) -> float:
        g = self.sc.graph
        if point.vertex is not None:
            anchor = point.vertex
            on_ray = anchor in self.ray
        else:
            e = g.edge(point.edge)
            on_ray = e.head in self.ray
            anchor = e.tail
        if on_ray:
            return 0.0
        v_conf = self._conf[anchor]
        level = g.vertex(v_conf).level
        y = self.sc.point_sigma(point)
        return float(np.log(self.eta(self.q ** (-level) * y)))

    def value(self, point: PointOnComplex) -> float:
        point = self.sc.check_point(point)
        y = self.sc.point_sigma(point)
        rho = float(horocyclic_displacement(point.x, self.eta(y)))
        return rho + self.kappa(point)


def treebolic_exhaustion(sc: StripComplex, point: PointOnComplex) -> float:
    """Value of the strip-adapted treebolic exhaustion at one point."""
    return TreebolicExhaustion(sc).value(point)


# -- approximation of unity --------------------------------------------------------


def approx_unity(sc: StripComplex, grid, n: float, theta=unit_cutoff,
                 exhaustion=None, epsilon: float | None = None, origin: int | None = None):
    """Scaled cutoff theta(rho_0 / n) evaluated on every grid degree of freedom.

    rho_0 is the treebolic exhaustion when available (or when requested),
    otherwise the edge-adapted exhaustion of the underlying graph.
    """
    from .graph import edge_exhaustion

    if n <= 0:
        raise ParameterError("scale n must be positive")
    if exhaustion is None:
        exhaustion = "treebolic" if sc.treebolic is not None else "edge"
    if exhaustion == "treebolic":
        if sc.treebolic is None:
            raise ConfigurationError("treebolic exhaustion requested on a non-treebolic complex")
        rho = TreebolicExhaustion(sc)
        rho0 = np.array([rho.value(grid.node_point(i)) for i in range(grid.size)])
    elif exhaustion == "edge":
        if origin is None:
            origin = sc.graph.vertices[0].id
        if epsilon is None:
            epsilon = sc.graph.min_edge_length / 16.0
        rho1 = edge_exhaustion(sc.graph, epsilon, origin)
        rho0 = np.empty(grid.size)
        for i in range(grid.size):
            pt = grid.node_point(i)
            if pt.vertex is not None:
                rho0[i] = rho1.vertex_values[pt.vertex]
            else:
                rho0[i] = float(rho1.value(pt.edge, pt.s))
    else:
        rho1 = exhaustion
        rho0 = np.array([rho1.value(grid.node_point(i)) for i in range(grid.size)])
    return np.asarray(theta(rho0 / float(n)), dtype=float)
