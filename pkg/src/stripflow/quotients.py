"""Projections between strip complexes: fiber collapse, plane slicing,
horocyclic collapse, weight compatibility certificates and heat comparisons.

All three structured maps preserve the graph coordinate strip by strip, so
the weight conditions reduce to constancy of mass-density ratios along every
edge (with the fiber volume as conversion factor when the fiber collapses)
and an additive balance at every vertex.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .assembly import Discretization, Grid
from .complexes import StripComplex, build_treebolic, collapse_to_graph_complex
from .errors import ConfigurationError, IncompatibilityError, ParameterError
from .graph import Edge, MetricGraph, Vertex
from .profiles import EdgeCoefficients, Profile


@dataclass
class WeightCertificate:
    ok: bool
    A: dict[int, float]
    a: dict[int, float]
    violations: list[dict]
    worst_vertex: int | None = None


@dataclass
class QuotientMap:
    source: StripComplex
    target: StripComplex
    vertex_map: dict[int, int]
    edge_map: dict[int, int]
    fiber_factor: float = 1.0  # vol(source fiber) / vol(target fiber)
    certificate: WeightCertificate | None = None

    def __post_init__(self):
        gs, gt = self.source.graph, self.target.graph
        for eid, e0id in self.edge_map.items():
            e, e0 = gs.edge(eid), gt.edge(e0id)
            tail0 = self.vertex_map[e.tail]
            head0 = self.vertex_map[e.head]
            if tail0 == head0:
                raise ParameterError(
                    f"edge {eid} would collapse to a loop at {tail0}; "
                    "insert middle vertices first (insert_middle_vertices)")
            if (tail0, head0) != (e0.tail, e0.head):
                raise ParameterError(
                    f"edge map breaks incidence on edge {eid}: "
                    f"({tail0}, {head0}) != ({e0.tail}, {e0.head})")


def insert_middle_vertices(sc: StripComplex) -> StripComplex:
    """Subdivide every edge with a dummy mid vertex (loop-avoidance device)."""
    g = sc.graph
    vertices = list(g.vertices)
    edges: list[Edge] = []
    coeffs: dict[int, EdgeCoefficients] = {}
    next_v = max(v.id for v in vertices) + 1
    next_e = 0
    for e in g.edges:
        mid = Vertex(next_v, boundary=False, level=None)
        vertices.append(mid)
        next_v += 1
        half = e.length / 2.0
        base = 0.0 if e.sigma0 is None else e.sigma0
        first = Edge(next_e, e.tail, mid.id, half, e.level, e.sigma0)
        second = Edge(next_e + 1, mid.id, e.head, half, e.level,
                      None if e.sigma0 is None else base + half)
        edges.extend((first, second))
        coeffs[next_e] = sc.coeffs[e.id]
        coeffs[next_e + 1] = sc.coeffs[e.id]
        next_e += 2
    graph = MetricGraph(vertices, edges, tree=None)
    return StripComplex(graph, sc.fiber, coeffs, sc.treebolic)


def check_weight_compatibility(source: StripComplex, target: StripComplex,
                               qmap: QuotientMap, samples: int = 8,
                               rtol: float = 1e-10) -> WeightCertificate:
    """Certificate for the projection weight conditions.

    Per edge, the ratio of (fiber-integrated) mass densities to the target
    mass density must be constant along the edge; per vertex, the ratios
    summed over the edges over each target edge must agree across target
    edges.  Violations are listed, the certificate never raises.
    """
    gs, gt = source.graph, target.graph
    A: dict[int, float] = {}
    a: dict[int, float] = {}
    violations: list[dict] = []

    def ratio(eid: int, sigma: np.ndarray) -> np.ndarray:
        e0id = qmap.edge_map[eid]
        num = qmap.fiber_factor * source.coeffs[eid].m(sigma)
        den = target.coeffs[e0id].m(sigma)
        return num / den

    for e in gs.edges:
        lo, hi = e.sigma_range
        pts = lo + (hi - lo) * (np.arange(1, samples + 1) / (samples + 1.0))
        r = ratio(e.id, pts)
        mean = float(np.mean(r))
        spread = float(np.max(np.abs(r - mean)))
        A[e.id] = mean
        if spread > rtol * abs(mean):
            violations.append({"kind": "edge-ratio", "edge": e.id,
                               "spread": spread, "mean": mean})

    worst_vertex, worst_mag = None, 0.0
    for v in gs.vertices:
        v0 = qmap.vertex_map[v.id]
        sums: dict[int, float] = {}
        for eid in gs.incident(v.id):
            e = gs.edge(eid)
            sig_v = float(e.sigma(0.0 if e.tail == v.id else e.length))
            sums[qmap.edge_map[eid]] = sums.get(qmap.edge_map[eid], 0.0) \
                + float(ratio(eid, np.array([sig_v]))[0])
        vals = np.array(list(sums.values()))
        mean = float(np.mean(vals))
        a[v.id] = mean
        if v.boundary:
            continue  # truncation cuts are artificial; the balance lives on interior vertices
        covered = set(sums)
        expected = set(gt.incident(v0))
        mag = float(np.max(np.abs(vals - mean))) / abs(mean) if mean else np.inf
        if covered != expected:
            mag = np.inf
            violations.append({"kind": "vertex-cover", "vertex": v.id,
                               "missing": sorted(expected - covered)})
        elif mag > rtol:
            violations.append({"kind": "vertex-balance", "vertex": v.id,
                               "sums": sums, "relative_spread": mag})
        if mag > worst_mag:
            worst_mag, worst_vertex = mag, v.id
    ok = not violations
    return WeightCertificate(ok=ok, A=A, a=a, violations=violations,
                             worst_vertex=None if ok else worst_vertex)


# -- the three structured projections ------------------------------------------------


def collapse_fiber(sc: StripComplex) -> tuple[StripComplex, QuotientMap]:
    """Collapse the fiber to a point; the (a, m) pair per unit fiber length carries over."""
    if sc.fiber.dimension == 0:
        warnings.warn("fiber is already a point; collapse_fiber is a no-op", stacklevel=2)
        ident = QuotientMap(sc, sc,
                            {v.id: v.id for v in sc.graph.vertices},
                            {e.id: e.id for e in sc.graph.edges}, fiber_factor=1.0)
        ident.certificate = check_weight_compatibility(sc, sc, ident)
        return sc, ident
    target = collapse_to_graph_complex(sc)
    qmap = QuotientMap(sc, target,
                       {v.id: v.id for v in sc.graph.vertices},
                       {e.id: e.id for e in sc.graph.edges},
                       fiber_factor=sc.fiber.length)
    qmap.certificate = check_weight_compatibility(sc, target, qmap)
    return target, qmap


def slice_plane(sc: StripComplex) -> tuple[StripComplex, QuotientMap]:
    """Project the treebolic complex onto the sliced half plane: beta -> beta * p.

    All strips of one horocycle level pool onto the single strip of that level
    of the p = 1 complex.
    """
    if sc.treebolic is None or sc.graph.tree is None:
        raise ConfigurationError("slice_plane needs a treebolic complex")
    meta = sc.treebolic
    p = int(meta["p"])
    target = build_treebolic(1, meta["q"], meta["alpha"], meta["beta"] * p,
                             sc.graph.tree["k_min"], sc.graph.tree["k_max"], meta["R"])
    k_min = sc.graph.tree["k_min"]
    vertex_map = {v.id: v.level - k_min for v in sc.graph.vertices}
    edge_map = {e.id: e.level - k_min - 1 for e in sc.graph.edges}
    qmap = QuotientMap(sc, target, vertex_map, edge_map, fiber_factor=1.0)
    qmap.certificate = check_weight_compatibility(sc, target, qmap)
    return target, qmap


def horocyclic_collapse(sc: StripComplex, b: dict[int, float]) -> tuple[StripComplex, QuotientMap]:
    """Collapse a tree complex onto the line over its levels, edge weights b_k.

    Requires the source measure weights psi_e = p**(-k) * b_k on level-k
    edges; the vertex balance (sum of child weights equals the parent weight)
    is certified and violations raise with the worst vertex.
    """
    g = sc.graph
    if any(e.level is None for e in g.edges) or any(v.level is None for v in g.vertices):
        raise ConfigurationError("horocyclic collapse needs level tags")
    levels = sorted({v.level for v in g.vertices})
    for k in levels[1:]:
        if k not in b:
            raise ParameterError(f"missing line weight b[{k}]")
    # line graph over the levels, inheriting per-level length/chart/phi
    by_level: dict[int, Edge] = {}
    for e in g.edges:
        by_level.setdefault(e.level, e)
    vertices = [Vertex(i, boundary=(k in (levels[0], levels[-1])), level=k)
                for i, k in enumerate(levels)]
    edges, coeffs = [], {}
    for i, k in enumerate(levels[1:]):
        src = by_level[k]
        edges.append(Edge(i, i, i + 1, src.length, k, src.sigma0))
        coeffs[i] = EdgeCoefficients(phi=sc.coeffs[src.id].phi,
                                     psi=Profile.constant(float(b[k])),
                                     n=sc.fiber.dimension)
    target = StripComplex(MetricGraph(vertices, edges, tree=None), sc.fiber, coeffs)
    level_ord = {k: i for i, k in enumerate(levels)}
    vertex_map = {v.id: level_ord[v.level] for v in g.vertices}
    edge_map = {e.id: level_ord[e.level] - 1 for e in g.edges}
    qmap = QuotientMap(sc, target, vertex_map, edge_map, fiber_factor=1.0)
    cert = check_weight_compatibility(sc, target, qmap)
    qmap.certificate = cert
    if not cert.ok:
        raise IncompatibilityError(
            f"source weights are not collapsible; worst vertex {cert.worst_vertex}",
            worst_vertex=cert.worst_vertex, violations=cert.violations)
    return target, qmap


# -- discrete aggregation and heat comparison ------------------------------------------


def build_dof_aggregation(qmap: QuotientMap, grid_src: Grid, grid_dst: Grid) -> np.ndarray:
    """Index table pooling every source dof into its target dof.

    Requires the target grid to be the image of the source grid: equal node
    counts per edge, matching charts, and either identical fibers or a point
    target fiber.
    """
    if grid_src.nodes_per_edge != grid_dst.nodes_per_edge:
        raise ConfigurationError("grid mismatch: nodes_per_edge differ")
    collapse = grid_dst.nx == 1
    if not collapse and grid_dst.nx != grid_src.nx:
        raise ConfigurationError("grid mismatch: fiber nodes differ")
    agg = np.full(grid_src.size, -1, dtype=np.int64)
    for vid, v0 in qmap.vertex_map.items():
        src = grid_src.vertex_dofs(vid)
        dst = grid_dst.vertex_dofs(v0)
        agg[src] = dst[0] if collapse else dst
    for eid, e0 in qmap.edge_map.items():
        if not np.allclose(grid_src.edge_sigma[eid], grid_dst.edge_sigma[e0], rtol=1e-12):
            raise ConfigurationError(f"grid mismatch: charts differ on edge {eid} -> {e0}")
        src = grid_src.edge_dofs[eid][1:-1]
        dst = grid_dst.edge_dofs[e0][1:-1]
        agg[src] = dst[:, :1] if collapse else dst
    if np.any(agg < 0):
        raise ConfigurationError("aggregation table does not cover all source dofs")
    return agg


def aggregate_measure(agg: np.ndarray, measure: np.ndarray, target_size: int) -> np.ndarray:
    return np.bincount(agg, weights=measure, minlength=target_size)


def pool_measure_by_cells(disc_src: Discretization, measure: np.ndarray,
                          qmap: QuotientMap, grid_dst: Grid) -> np.ndarray:
    """Pool a source measure vector into target dual cells by position.

    Unlike `build_dof_aggregation` this works for independently discretized
    targets: every source node's mass lands in the target cell containing its
    (edge image, s, x) position.
    """
    grid_src = disc_src.grid
    out = np.zeros(grid_dst.size)
    for i in range(grid_src.size):
        if measure[i] == 0.0:
            continue
        vid = grid_src.node_vertex[i]
        if vid >= 0:
            dofs = grid_dst.vertex_dofs(qmap.vertex_map[int(vid)])
            if grid_dst.nx == 1:
                out[dofs[0]] += measure[i]
            else:
                jx = int((grid_src.node_x[i] - grid_dst.sc.fiber.x_range[0]) / grid_dst.dx)
                out[dofs[min(max(jx, 0), grid_dst.nx - 1)]] += measure[i]
            continue
        eid = int(grid_src.node_edge[i])
        dof = grid_dst.bin_point(qmap.edge_map[eid], grid_src.node_s[i],
                                 grid_src.node_x[i] if grid_dst.nx > 1 else 0.0)
        out[dof] += measure[i]
    return out


def density_on_reference_grid(disc_src: Discretization, qmap: QuotientMap,
                              values: np.ndarray, grid_ref: Grid) -> np.ndarray:
    """Pooled kernel density transported onto an independently discretized target grid.

    The source field is aggregated exactly onto the image grid (same node
    layout as the source) and the resulting density is interpolated edge by
    edge, linearly in log sigma, onto the reference target grid.  Fiber grids
    must coincide (or the target fiber is a point).
    """
    grid_img = Grid(qmap.target, disc_src.grid.nodes_per_edge,
                    1 if grid_ref.nx == 1 else disc_src.grid.nx)
    if grid_ref.nx not in (1, grid_img.nx):
        raise ConfigurationError("reference fiber grid must match the source")
    agg = build_dof_aggregation(qmap, disc_src.grid, grid_img)
    pooled_measure = aggregate_measure(agg, values * disc_src.mass, grid_img.size)
    # density against the *target* measure (the pushforward theorem's reference)
    dens_img = pooled_measure / grid_img.node_mass
    out = np.zeros(grid_ref.size)
    for e in qmap.target.graph.edges:
        sig_img = grid_img.edge_sigma[e.id]
        sig_ref = grid_ref.edge_sigma[e.id]
        tab_img = grid_img.edge_dofs[e.id]
        tab_ref = grid_ref.edge_dofs[e.id]
        positive = sig_img[0] > 0
        xi = np.log(sig_img) if positive else sig_img
        xr = np.log(sig_ref) if positive else sig_ref
        for j in range(grid_ref.nx):
            out[tab_ref[:, j]] = np.interp(xr, xi, dens_img[tab_img[:, j]])
    return out


@dataclass
class ProjectionReport:
    t: float
    rel_l1: float
    rel_l1_mc: float | None
    pooled: np.ndarray = field(repr=False)
    intrinsic: np.ndarray = field(repr=False)


def compare_projected_heat(disc_src: Discretization, disc_dst: Discretization,
                           qmap: QuotientMap, source: int, t: float,
                           dt: float | None = None, scheme: str = "crank_nicolson",
                           n_paths: int | None = None, seed: int = 0) -> ProjectionReport:
    """Aggregate the source heat kernel and compare with the intrinsic target kernel.

    Both kernels start from matched unit point masses; the comparison is the
    relative L1 distance of the pooled measure vectors.  Optionally also
    projects an exact jump-chain empirical law.
    """
    from .brownian import sample_ctmc
    from .heat import heat_kernel

    agg = build_dof_aggregation(qmap, disc_src.grid, disc_dst.grid)
    if dt is None:
        dt = t / 64.0
    slice_src = heat_kernel(disc_src, source, t, dt, scheme)
    pooled = aggregate_measure(agg, slice_src.values * disc_src.mass, disc_dst.size)
    slice_dst = heat_kernel(disc_dst, int(agg[source]), t, dt, scheme)
    intrinsic = slice_dst.values * disc_dst.mass
    rel_l1 = float(np.sum(np.abs(pooled - intrinsic)) / np.sum(np.abs(intrinsic)))
    rel_mc = None
    if n_paths:
        emp = sample_ctmc(disc_src, source, t, n_paths, seed)
        pooled_mc = aggregate_measure(agg, emp.counts / emp.n_paths, disc_dst.size)
        rel_mc = float(np.sum(np.abs(pooled_mc - intrinsic)) / np.sum(np.abs(intrinsic)))
    return ProjectionReport(t=t, rel_l1=rel_l1, rel_l1_mc=rel_mc,
                            pooled=pooled, intrinsic=intrinsic)
