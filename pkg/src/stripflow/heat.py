"""Heat semigroup, harmonic solver, spectral bottom and kernel checks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla

from .assembly import Discretization
from .errors import ConfigurationError, DomainError, NumericalError, ParameterError

IMPLICIT_EULER = "implicit_euler"
CRANK_NICOLSON = "crank_nicolson"


@dataclass
class HeatKernelSlice:
    """h(t, source, .) as a density against the lumped masses."""

    t: float
    source: int
    values: np.ndarray
    disc: Discretization

    @property
    def retained_mass(self) -> float:
        return float(np.dot(self.values, self.disc.mass))


def _march(d: Discretization, f0: np.ndarray, t: float, dt: float, scheme: str,
           rannacher: int = 0) -> np.ndarray:
    if scheme not in (IMPLICIT_EULER, CRANK_NICOLSON):
        raise ParameterError(f"unknown scheme {scheme!r}")
    if not (t > 0 and 0 < dt <= t):
        raise ParameterError(f"need 0 < dt <= t, got dt={dt}, t={t}")
    n_steps = max(1, round(t / dt))
    dt = t / n_steps
    if scheme == IMPLICIT_EULER:
        rannacher = 0
    rannacher = min(rannacher, n_steps)

    idx, K_ii, m_i = d.interior_system()
    M_i = sp.diags(m_i)
    theta = 1.0 if scheme == IMPLICIT_EULER else 0.5
    A = (M_i + theta * dt * K_ii).tocsc()
    solver = spla.splu(A)

    u = f0.copy()
    u_i = u[idx]
    boundary = np.flatnonzero(d.pinned)
    if boundary.size:
        K_ib = d.stiffness[idx][:, boundary]
        drive = -(K_ib @ u[boundary])
    else:
        drive = np.zeros_like(u_i)
    if rannacher:
        # damp rough initial data: each leading step is two implicit Euler half-steps
        A_half = (M_i + 0.5 * dt * K_ii).tocsc()
        solver_half = spla.splu(A_half)
        for _ in range(2 * rannacher):
            u_i = solver_half.solve(m_i * u_i + 0.5 * dt * drive)
    explicit = None if theta == 1.0 else (M_i - (1.0 - theta) * dt * K_ii).tocsr()
    rhs = None
    for _ in range(n_steps - rannacher):
        rhs = (m_i * u_i if explicit is None else explicit @ u_i) + dt * drive
        u_i = solver.solve(rhs)
    if rhs is not None:
        resid = np.linalg.norm(A @ u_i - rhs) / (np.linalg.norm(rhs) + 1e-300)
        if not np.isfinite(resid) or resid > 1e-8:
            raise NumericalError(f"linear solve residual {resid:.3e} exceeds tolerance")
    u[idx] = u_i
    return u


def step_heat(d: Discretization, f0: np.ndarray, t: float, dt: float,
              scheme: str = CRANK_NICOLSON) -> np.ndarray:
    """Approximate e^{tL} f0 by implicit Euler or Crank-Nicolson steps.

    Implicit Euler preserves positivity and the range of f0; Crank-Nicolson
    is second order in dt.  Pinned (absorbing) values are held fixed.
    """
    return _march(d, d.check_field(f0), t, dt, scheme)


def heat_kernel(d: Discretization, source: int, t: float, dt: float | None = None,
                scheme: str = CRANK_NICOLSON) -> HeatKernelSlice:
    """Heat kernel slice h(t, source, .) = e^{tL} (delta_source / mass).

    Crank-Nicolson runs start with two pairs of implicit Euler half-steps
    (Rannacher smoothing); without them the undamped stiff modes of the point
    mass survive as a spike at the source.  All factors are rational functions
    of the same operator, so kernel symmetry is preserved exactly.
    """
    if not (0 <= source < d.size):
        raise DomainError(f"source dof {source} out of range")
    if d.pinned[source]:
        raise DomainError(f"source dof {source} is pinned")
    if dt is None:
        dt = t / 64.0
    f0 = np.zeros(d.size)
    f0[source] = 1.0 / d.mass[source]
    values = _march(d, f0, t, dt, scheme, rannacher=2)
    return HeatKernelSlice(t=t, source=source, values=values, disc=d)


def spectral_bottom(d: Discretization, tol: float = 1e-10) -> float:
    """Smallest generalized eigenvalue of K v = lambda M v on the interior block."""
    idx, K_ii, m_i = d.interior_system()
    if len(idx) < 3:
        lam = np.linalg.eigvalsh(K_ii.toarray() / m_i[:, None] ** 0.5 / m_i[None, :] ** 0.5)
        return float(lam[0])
    scale = float((K_ii.diagonal() / m_i).max())
    sigma = -1e-6 * scale
    try:
        vals = spla.eigsh(K_ii, k=1, M=sp.diags(m_i).tocsc(), sigma=sigma,
                          which="LM", tol=tol, return_eigenvectors=False)
    except spla.ArpackNoConvergence as exc:
        raise NumericalError(f"eigensolver did not converge: {exc}") from exc
    return float(max(vals[0], 0.0))


def solve_harmonic(d: Discretization, boundary_values: dict[int, float]) -> np.ndarray:
    """Solve K_II u_I = -K_IB u_B; satisfies the discrete maximum principle.

    The Dirichlet set is the union of the given degrees of freedom and any
    pinned truncation boundary (pinned dofs default to value 0).
    """
    dirichlet = dict.fromkeys(np.flatnonzero(d.pinned).tolist(), 0.0)
    dirichlet.update({int(k): float(v) for k, v in boundary_values.items()})
    if not dirichlet:
        raise ConfigurationError("harmonic problem needs a nonempty boundary set")
    mask = np.zeros(d.size, dtype=bool)
    mask[list(dirichlet.keys())] = True
    u = np.zeros(d.size)
    for k, v in dirichlet.items():
        u[k] = v
    idx = np.flatnonzero(~mask)
    if idx.size == 0:
        return u
    bnd = np.flatnonzero(mask)
    K_ii = d.stiffness[idx][:, idx].tocsc()
    rhs = -(d.stiffness[idx][:, bnd] @ u[bnd])
    try:
        u[idx] = spla.splu(K_ii).solve(rhs)
    except RuntimeError as exc:
        raise ConfigurationError(f"interior block is singular: {exc}") from exc
    return u


# -- Kirchhoff residual ------------------------------------------------------------


def _one_sided_sigma_derivative(grid, f: np.ndarray, eid: int, at_tail: bool) -> np.ndarray:
    """Second-order one-sided d/d sigma of f along edge eid at one vertex layer."""
    sig = grid.edge_sigma[eid]
    table = grid.edge_dofs[eid]
    ns = len(sig)
    order = (0, 1, 2) if at_tail else (ns - 1, ns - 2, ns - 3)
    if ns >= 3:
        i0, i1, i2 = order
        h1 = sig[i1] - sig[i0]
        h2 = sig[i2] - sig[i0]
        w0 = -(h1 + h2) / (h1 * h2)
        w1 = h2 / (h1 * (h2 - h1))
        w2 = -h1 / (h2 * (h2 - h1))
        return w0 * f[table[i0]] + w1 * f[table[i1]] + w2 * f[table[i2]]
    i0, i1 = order[0], order[1]
    return (f[table[i1]] - f[table[i0]]) / (sig[i1] - sig[i0])


def kirchhoff_residual(d: Discretization, f: np.ndarray, v: int) -> tuple[np.ndarray, float]:
    """Weighted one-sided flux balance across the bifurcation manifold at v.

    residual(x) = sum over incident edges of sign * a_e(v) * D_sigma f_e(v, x),
    with sign +1 when the edge leaves v and -1 when it arrives; harmonic and
    caloric fields drive this to zero under refinement.
    """
    f = d.check_field(f)
    vert = d.sc.graph.vertex(v)
    if vert.boundary:
        raise DomainError(f"vertex {v} lies on the truncation boundary")
    res = np.zeros(d.grid.nx)
    for eid in d.sc.graph.incident(v):
        e = d.sc.graph.edge(eid)
        at_tail = e.tail == v
        sig_v = d.grid.edge_sigma[eid][0 if at_tail else -1]
        weight = float(d.sc.coeffs[eid].a(sig_v))
        sign = 1.0 if at_tail else -1.0
        res += sign * weight * _one_sided_sigma_derivative(d.grid, f, eid, at_tail)
    return res, float(np.max(np.abs(res)))


# -- kernel property checks ----------------------------------------------------------


@dataclass
class GaussianBoundReport:
    c_star: float
    argmax: int
    epsilon: float
    t: float
    n_nonpositive: int
    log_terms: np.ndarray = field(repr=False)


def gaussian_bound_check(d: Discretization, kernel: HeatKernelSlice,
                         epsilon: float) -> GaussianBoundReport:
    """Supremum of log h + d^2 / (4 (1+eps) t) over the grid.

    Finiteness and grid stability of the supremum witness the off-diagonal
    Gaussian upper bound; distances are shortest grid paths from the source.
    """
    if not 0.0 < epsilon < 1.0:
        raise ParameterError("epsilon must lie in (0, 1)")
    w = d.grid.metric_graph_matrix()
    dist = csgraph.dijkstra(w, directed=False, indices=[kernel.source])[0]
    h = kernel.values
    ok = h > 0
    n_bad = int(np.sum(~ok))
    terms = np.full(d.size, -np.inf)
    terms[ok] = np.log(h[ok]) + dist[ok] ** 2 / (4.0 * (1.0 + epsilon) * kernel.t)
    arg = int(np.argmax(terms))
    return GaussianBoundReport(c_star=float(terms[arg]), argmax=arg, epsilon=epsilon,
                               t=kernel.t, n_nonpositive=n_bad, log_terms=terms)


@dataclass
class SmoothnessReport:
    vertex: int
    edges: list
    x_position: float
    s_estimates: np.ndarray  # (levels, edges) one-sided d/d sigma at the manifold
    x_estimates: np.ndarray  # (levels, edges) extrapolated fiber derivative

    @property
    def s_limits(self) -> np.ndarray:
        return self.s_estimates[-1]

    @property
    def x_limits(self) -> np.ndarray:
        return self.x_estimates[-1]

    @property
    def s_cauchy(self) -> np.ndarray:
        return np.abs(self.s_estimates[-1] - self.s_estimates[-2])

    @property
    def x_cauchy(self) -> np.ndarray:
        return np.abs(self.x_estimates[-1] - self.x_estimates[-2])


def smoothness_probe(discs: list[Discretization], solver, vertex: int,
                     x_position: float = 0.0) -> SmoothnessReport:
    """One-sided derivative stability across a bifurcation manifold.

    For each discretization of the refinement ladder (which must share the
    fiber grid), the solver produces a field; the probe reports per incident
    strip the one-sided d/d sigma at the manifold and the fiber derivative
    extrapolated to the manifold from inside the strip.
    """
    if len(discs) < 3:
        raise ParameterError("need a ladder of at least 3 discretizations")
    g = discs[0].sc.graph
    edges = list(g.incident(vertex))
    s_rows, x_rows = [], []
    for d in discs:
        f = np.asarray(solver(d), dtype=float)
        grid = d.grid
        jx = int(np.argmin(np.abs(grid.x - x_position)))
        s_row, x_row = [], []
        for eid in edges:
            e = g.edge(eid)
            at_tail = e.tail == vertex
            dv = _one_sided_sigma_derivative(grid, f, eid, at_tail)
            s_row.append(dv[jx])
            x_row.append(_extrapolated_fiber_derivative(grid, f, eid, at_tail, jx))
        s_rows.append(s_row)
        x_rows.append(x_row)
    return SmoothnessReport(vertex=vertex, edges=edges, x_position=x_position,
                            s_estimates=np.array(s_rows), x_estimates=np.array(x_rows))


def _extrapolated_fiber_derivative(grid, f: np.ndarray, eid: int, at_tail: bool, jx: int) -> float:
    if grid.nx < 3:
        raise ConfigurationError("fiber derivative probe needs at least 3 fiber nodes")
    sig = grid.edge_sigma[eid]
    table = grid.edge_dofs[eid]
    ns = len(sig)
    layers = (0, 1, 2) if at_tail else (ns - 1, ns - 2, ns - 3)
    j_lo = (jx - 1) % grid.nx if grid.wrap else max(jx - 1, 0)
    j_hi = (jx + 1) % grid.nx if grid.wrap else min(jx + 1, grid.nx - 1)
    span = (2 if grid.wrap or (0 < jx < grid.nx - 1) else 1) * grid.dx
    dx1 = (f[table[layers[1], j_hi]] - f[table[layers[1], j_lo]]) / span
    dx2 = (f[table[layers[2], j_hi]] - f[table[layers[2], j_lo]]) / span
    s0, s1, s2 = sig[layers[0]], sig[layers[1]], sig[layers[2]]
    return float(dx1 + (dx1 - dx2) * (s0 - s1) / (s1 - s2))


def total_mass(d: Discretization, f: np.ndarray) -> float:
    return float(np.dot(d.check_field(f), d.mass))
