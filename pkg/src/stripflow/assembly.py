"""Finite-volume discretization of the weighted Dirichlet form.

The energy sum over strips of a_e(s) (|d_s f|^2 + |d_x f|^2) ds dx with mass
density m_e(s) becomes a sparse symmetric stiffness matrix and a positive
lumped mass vector.  Bifurcation manifolds contribute a single shared layer
of degrees of freedom per vertex, which encodes trace equality across the
incident strips and yields the Kirchhoff flux balance weakly, with weights
a_e(v) at the interface.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .complexes import CIRCLE, INTERVAL, POINT, PointOnComplex, StripComplex
from .errors import AssemblyError, DomainError, ParameterError, ShapeError

REFLECTING = "reflecting"
ABSORBING = "absorbing"


class Grid:
    """Tensor grid per strip with deduplicated vertex layers.

    Treebolic edges (positive global chart) get geometrically spaced nodes so
    the resolution is uniform in the hyperbolic metric; all other edges are
    spaced uniformly.  Fiber nodes are cell centers, which makes the
    reflecting ends natural.
    """

    def __init__(self, sc: StripComplex, nodes_per_edge: int, fiber_nodes: int):
        if nodes_per_edge < 2:
            raise ParameterError("nodes_per_edge must be >= 2")
        if fiber_nodes < 1:
            raise ParameterError("fiber_nodes must be >= 1")
        self.sc = sc
        self.nodes_per_edge = int(nodes_per_edge)
        fiber = sc.fiber
        if fiber.kind == POINT:
            self.nx = 1
            self.dx = 1.0  # unit fiber weight for the 1D reduction
            self.x = np.zeros(1)
            self.wrap = False
        else:
            self.nx = int(fiber_nodes)
            lo, hi = fiber.x_range
            self.dx = (hi - lo) / self.nx
            self.x = lo + (np.arange(self.nx) + 0.5) * self.dx
            self.wrap = fiber.kind == CIRCLE

        g = sc.graph
        self.vertex_ord = {v.id: i for i, v in enumerate(g.vertices)}
        self.edge_sigma: dict[int, np.ndarray] = {}
        for e in g.edges:
            ns = self.nodes_per_edge
            lo, hi = e.sigma_range
            if e.sigma0 is not None and lo > 0:
                self.edge_sigma[e.id] = lo * (hi / lo) ** (np.arange(ns) / (ns - 1))
            else:
                self.edge_sigma[e.id] = np.linspace(lo, hi, ns)

        nv = len(g.vertices)
        self.size = nv * self.nx + sum(max(0, self.nodes_per_edge - 2) for _ in g.edges) * self.nx
        self.edge_dofs: dict[int, np.ndarray] = {}
        offset = nv * self.nx
        for e in g.edges:
            ns = self.nodes_per_edge
            table = np.empty((ns, self.nx), dtype=np.int64)
            table[0] = self.vertex_ord[e.tail] * self.nx + np.arange(self.nx)
            table[-1] = self.vertex_ord[e.head] * self.nx + np.arange(self.nx)
            inner = ns - 2
            if inner > 0:
                table[1:-1] = offset + np.arange(inner * self.nx).reshape(inner, self.nx)
                offset += inner * self.nx
            self.edge_dofs[e.id] = table

        # node coordinate tables (vertex nodes take coordinates from their first edge)
        self.node_vertex = np.full(self.size, -1, dtype=np.int64)
        self.node_edge = np.full(self.size, -1, dtype=np.int64)
        self.node_si = np.zeros(self.size, dtype=np.int64)
        self.node_sigma = np.zeros(self.size)
        self.node_s = np.zeros(self.size)
        self.node_x = np.zeros(self.size)
        for v in g.vertices:
            dofs = self.vertex_dofs(v.id)
            self.node_vertex[dofs] = v.id
            self.node_x[dofs] = self.x
            eid = g.incident(v.id)[0]
            e = g.edge(eid)
            at_tail = e.tail == v.id
            self.node_sigma[dofs] = self.edge_sigma[eid][0 if at_tail else -1]
            self.node_s[dofs] = 0.0 if at_tail else e.length
        for e in g.edges:
            table = self.edge_dofs[e.id]
            sig = self.edge_sigma[e.id]
            base = 0.0 if e.sigma0 is None else e.sigma0
            for i in range(1, self.nodes_per_edge - 1):
                dofs = table[i]
                self.node_edge[dofs] = e.id
                self.node_si[dofs] = i
                self.node_sigma[dofs] = sig[i]
                self.node_s[dofs] = sig[i] - base
                self.node_x[dofs] = self.x

        self.node_mass = self._lump_masses()
        self._metric = None

    # -- construction helpers ---------------------------------------------------

    def vertex_dofs(self, vid: int) -> np.ndarray:
        return self.vertex_ord[vid] * self.nx + np.arange(self.nx)

    def _lump_masses(self) -> np.ndarray:
        mass = np.zeros(self.size)
        for e in self.sc.graph.edges:
            m = self.sc.coeffs[e.id].m
            sig = self.edge_sigma[e.id]
            h = np.diff(sig)
            cell = m(0.5 * (sig[:-1] + sig[1:])) * h * self.dx
            if np.any(cell <= 0) or not np.all(np.isfinite(cell)):
                bad = int(np.argmin(cell))
                raise AssemblyError(
                    f"non-positive mass in cell {bad} of edge {e.id} "
                    f"(sigma in [{sig[bad]:.6g}, {sig[bad + 1]:.6g}])")
            table = self.edge_dofs[e.id]
            for j in range(self.nx):
                np.add.at(mass, table[:-1, j], 0.5 * cell)
                np.add.at(mass, table[1:, j], 0.5 * cell)
        return mass

    def node_point(self, i: int) -> PointOnComplex:
        if self.node_vertex[i] >= 0:
            return PointOnComplex.at_vertex(int(self.node_vertex[i]), float(self.node_x[i]))
        return PointOnComplex.on_edge(int(self.node_edge[i]), float(self.node_s[i]),
                                      float(self.node_x[i]))

    # -- metric grid graph --------------------------------------------------------

    def metric_graph_matrix(self) -> sp.csr_matrix:
        """Sparse symmetric matrix of exact path lengths between neighbouring nodes."""
        if self._metric is not None:
            return self._metric
        weights: dict[tuple[int, int], float] = {}

        def add(i, j, w):
            key = (i, j) if i < j else (j, i)
            prev = weights.get(key)
            if prev is None or w < prev:
                weights[key] = w

        for e in self.sc.graph.edges:
            phi = self.sc.coeffs[e.id].phi
            sig = self.edge_sigma[e.id]
            table = self.edge_dofs[e.id]
            ns = len(sig)
            seg = np.array([phi.sqrt_integral(sig[i], sig[i + 1]) for i in range(ns - 1)])
            sphi = np.sqrt(phi(sig))
            for j in range(self.nx):
                for i in range(ns - 1):
                    add(table[i, j], table[i + 1, j], seg[i])
            x_pairs = [(j, j + 1) for j in range(self.nx - 1)]
            if self.wrap and self.nx > 1:
                x_pairs.append((self.nx - 1, 0))
            for j, j2 in x_pairs:
                for i in range(ns):
                    add(table[i, j], table[i, j2], sphi[i] * self.dx)
                for i in range(ns - 1):
                    dsig = sig[i + 1] - sig[i]
                    diag = seg[i] * np.hypot(dsig, self.dx) / dsig
                    add(table[i, j], table[i + 1, j2], diag)
                    add(table[i, j2], table[i + 1, j], diag)
        keys = np.array(list(weights.keys()), dtype=np.int64)
        vals = np.array(list(weights.values()))
        mat = sp.coo_matrix((vals, (keys[:, 0], keys[:, 1])), shape=(self.size, self.size))
        self._metric = (mat + mat.T).tocsr()
        return self._metric

    def attach_point(self, point: PointOnComplex) -> tuple[int, float]:
        """Nearest grid node and the exact length of the connecting axis path."""
        point = self.sc.check_point(point)
        if self.nx == 1:
            jx, xcost_scale = 0, 0.0
        else:
            jx = int(np.argmin(np.abs(self.x - point.x)))
            xcost_scale = abs(self.x[jx] - point.x)
        if point.vertex is not None:
            eid = self.sc.graph.incident(point.vertex)[0]
            e = self.sc.graph.edge(eid)
            phi = self.sc.coeffs[eid].phi
            sig_v = self.edge_sigma[eid][0 if e.tail == point.vertex else -1]
            dof = self.vertex_dofs(point.vertex)[jx]
            return int(dof), float(np.sqrt(phi(sig_v)) * xcost_scale)
        e = self.sc.graph.edge(point.edge)
        phi = self.sc.coeffs[e.id].phi
        sig = self.edge_sigma[e.id]
        sp_ = float(e.sigma(point.s))
        i = int(np.argmin(np.abs(sig - sp_)))
        lo, hi = min(sp_, sig[i]), max(sp_, sig[i])
        cost = phi.sqrt_integral(lo, hi) + float(np.sqrt(phi(sp_))) * xcost_scale
        return int(self.edge_dofs[e.id][i, jx]), cost

    def bin_point(self, edge: int, s: float, x: float) -> int:
        """Degree of freedom whose dual cell contains the point (edge, s, x)."""
        e = self.sc.graph.edge(edge)
        sig = self.edge_sigma[edge]
        mids = 0.5 * (sig[:-1] + sig[1:])
        i = int(np.searchsorted(mids, float(e.sigma(s))))
        if self.nx == 1:
            jx = 0
        else:
            lo, _ = self.sc.fiber.x_range
            jx = int((x - lo) / self.dx)
            jx = jx % self.nx if self.wrap else min(max(jx, 0), self.nx - 1)
        return int(self.edge_dofs[edge][i, jx])


def build_grid(sc: StripComplex, nodes_per_edge: int, fiber_nodes: int = 1) -> Grid:
    """Shared-node tensor grid; see `Grid`."""
    return Grid(sc, nodes_per_edge, fiber_nodes)


@dataclass
class Discretization:
    """Lumped mass vector and sparse symmetric stiffness matrix K.

    The generator is L = -M^{-1} K; with the reflecting policy K has exact
    zero row sums, with the absorbing policy the truncation-boundary vertex
    layers are pinned (rows of L forced to zero, so pinned states absorb).
    """

    sc: StripComplex
    grid: Grid
    stiffness: sp.csr_matrix
    mass: np.ndarray
    boundary_policy: str
    pinned: np.ndarray  # bool mask of pinned degrees of freedom

    @property
    def size(self) -> int:
        return self.grid.size

    @property
    def interior(self) -> np.ndarray:
        return ~self.pinned

    def check_field(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != (self.size,):
            raise ShapeError(f"field has shape {f.shape}, expected ({self.size},)")
        return f

    def interior_system(self):
        idx = np.flatnonzero(self.interior)
        K_ii = self.stiffness[idx][:, idx].tocsc()
        return idx, K_ii, self.mass[idx]

    def rates(self) -> np.ndarray:
        r = self.stiffness.diagonal() / self.mass
        r[self.pinned] = 0.0
        return r


def assemble(sc: StripComplex, grid: Grid, boundary_policy: str = REFLECTING) -> Discretization:
    """Assemble conductances a_e and lumped masses m_e on the shared-node grid."""
    if boundary_policy not in (REFLECTING, ABSORBING):
        raise ParameterError(f"unknown boundary policy {boundary_policy!r}")
    rows, cols, vals = [], [], []

    def couple(ii, jj, c):
        rows.extend((ii, jj))
        cols.extend((jj, ii))
        vals.extend((-c, -c))

    for e in sc.graph.edges:
        a = sc.coeffs[e.id].a
        sig = grid.edge_sigma[e.id]
        table = grid.edge_dofs[e.id]
        ns = len(sig)
        h = np.diff(sig)
        a_mid = a(0.5 * (sig[:-1] + sig[1:]))
        cond_s = a_mid * grid.dx / h
        for j in range(grid.nx):
            for i in range(ns - 1):
                couple(table[i, j], table[i + 1, j], cond_s[i])
        if grid.nx > 1 and sc.fiber.dimension == 1:
            a_node = a(sig)
            dual = np.empty(ns)
            dual[0] = h[0] / 2.0
            dual[-1] = h[-1] / 2.0
            if ns > 2:
                dual[1:-1] = 0.5 * (h[:-1] + h[1:])
            cond_x = a_node * dual / grid.dx
            x_pairs = [(j, j + 1) for j in range(grid.nx - 1)]
            if grid.wrap:
                x_pairs.append((grid.nx - 1, 0))
            for j, j2 in x_pairs:
                for i in range(ns):
                    couple(table[i, j], table[i, j2], cond_x[i])

    K = sp.coo_matrix((vals, (rows, cols)), shape=(grid.size, grid.size)).tocsr()
    K.sum_duplicates()
    diag = -np.asarray(K.sum(axis=1)).ravel()
    K = (K + sp.diags(diag)).tocsr()

    mass = grid.node_mass.copy()
    if np.any(mass <= 0):
        bad = int(np.argmin(mass))
        raise AssemblyError(f"non-positive lumped mass at degree of freedom {bad}")

    pinned = np.zeros(grid.size, dtype=bool)
    if boundary_policy == ABSORBING:
        for vid in sc.graph.boundary_vertices:
            pinned[grid.vertex_dofs(vid)] = True
        if not np.any(pinned):
            raise ParameterError("absorbing policy needs truncation-boundary vertices")
    return Discretization(sc, grid, K, mass, boundary_policy, pinned)


def apply_generator(d: Discretization, f: np.ndarray) -> np.ndarray:
    """L f = -M^{-1} K f (rows of pinned degrees of freedom are zero)."""
    f = d.check_field(f)
    out = -(d.stiffness @ f) / d.mass
    out[d.pinned] = 0.0
    return out


def field_from_function(d_or_grid, fn) -> np.ndarray:
    """Sample fn(sigma, x) at every degree of freedom."""
    grid = d_or_grid.grid if isinstance(d_or_grid, Discretization) else d_or_grid
    return np.asarray(fn(grid.node_sigma, grid.node_x), dtype=float)


def gradient_sup(grid: Grid, f: np.ndarray, interior_only: bool = False) -> np.ndarray:
    """Per-node estimate of the metric gradient length |grad f| by one-sided differences.

    The s and x difference quotients are scaled by 1/sqrt(phi) at the cell
    midpoint; each node reports the hypot of the largest adjacent quotients.
    """
    f = np.asarray(f, dtype=float)
    gs = np.zeros(grid.size)
    gx = np.zeros(grid.size)
    for e in grid.sc.graph.edges:
        phi = grid.sc.coeffs[e.id].phi
        sig = grid.edge_sigma[e.id]
        table = grid.edge_dofs[e.id]
        inv_sphi_mid = 1.0 / np.sqrt(phi(0.5 * (sig[:-1] + sig[1:])))
        inv_sphi = 1.0 / np.sqrt(phi(sig))
        h = np.diff(sig)
        for j in range(grid.nx):
            slopes = np.abs(np.diff(f[table[:, j]])) / h * inv_sphi_mid
            np.maximum.at(gs, table[:-1, j], slopes)
            np.maximum.at(gs, table[1:, j], slopes)
        if grid.nx > 1:
            x_pairs = [(j, j + 1) for j in range(grid.nx - 1)]
            if grid.wrap:
                x_pairs.append((grid.nx - 1, 0))
            for j, j2 in x_pairs:
                slopes = np.abs(f[table[:, j2]] - f[table[:, j]]) / grid.dx * inv_sphi
                np.maximum.at(gx, table[:, j], slopes)
                np.maximum.at(gx, table[:, j2], slopes)
    out = np.hypot(gs, gx)
    if interior_only:
        boundary = np.zeros(grid.size, dtype=bool)
        for vid in grid.sc.graph.boundary_vertices:
            boundary[grid.vertex_dofs(vid)] = True
        out = out[~boundary]
    return out
