"""Monte Carlo counterparts of the heat semigroup.

Two samplers: the exact continuous-time jump chain of the assembled generator
L = -M^{-1} K (ground truth), and an Euler-Maruyama walker on the continuous
complex with a Walsh branching rule at bifurcation manifolds whose edge
weights are the Kirchhoff flux weights a_e(v).

Randomness is drawn from per-batch Philox substreams spawned from the run
seed, so runs are bitwise reproducible for fixed (seed, parameters).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assembly import Discretization, Grid
from .complexes import CIRCLE, INTERVAL, PointOnComplex, StripComplex
from .errors import DomainError, NumericalError, ParameterError
from .profiles import POWER, CONSTANT

_BATCH = 1 << 15


def _batch_rng(seed: int, domain: int, batch: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(domain, batch))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class EmpiricalMeasure:
    """Occupation counts per degree of freedom with density conversion masses."""

    counts: np.ndarray
    n_paths: int
    masses: np.ndarray = field(repr=False)
    absorbed: int = 0
    capped: int = 0

    @property
    def density(self) -> np.ndarray:
        return self.counts / (self.n_paths * self.masses)

    @property
    def surviving_fraction(self) -> float:
        return 1.0 - self.absorbed / self.n_paths


@dataclass
class _JumpTables:
    rates: np.ndarray
    indptr: np.ndarray
    targets: np.ndarray
    cumprob: np.ndarray
    max_deg: int


def _jump_tables(d: Discretization) -> _JumpTables:
    K = d.stiffness.tocsr().copy()
    K.setdiag(0.0)
    K.eliminate_zeros()
    P = (-K).tocsr()
    P.data = np.maximum(P.data, 0.0)
    rates = d.rates()
    indptr = P.indptr
    cum = P.data.copy()
    for i in range(d.size):
        lo, hi = indptr[i], indptr[i + 1]
        if hi > lo:
            block = np.cumsum(cum[lo:hi])
            total = block[-1]
            cum[lo:hi] = block / total if total > 0 else 1.0
    deg = np.diff(indptr)
    return _JumpTables(rates=rates, indptr=indptr, targets=P.indices,
                       cumprob=cum, max_deg=int(deg.max()))


def _pick(tables: _JumpTables, states: np.ndarray, u: np.ndarray) -> np.ndarray:
    pos = tables.indptr[states].astype(np.int64)
    hi = tables.indptr[states + 1].astype(np.int64) - 1
    for _ in range(tables.max_deg - 1):
        adv = (pos < hi) & (tables.cumprob[pos] <= u)
        if not adv.any():
            break
        pos[adv] += 1
    return tables.targets[pos]


def sample_ctmc(d: Discretization, source: int, t: float, n_paths: int,
                seed: int) -> EmpiricalMeasure:
    """Exact jump-chain simulation of e^{tL} delta_source.

    Walkers hold at node i for Exp(K_ii / m_i) and jump with probabilities
    proportional to the off-diagonal conductances; walkers reaching a pinned
    node freeze there (absorption).
    """
    if n_paths < 1:
        raise ParameterError("n_paths must be >= 1")
    if not (0 <= source < d.size) or d.pinned[source]:
        raise DomainError(f"bad source dof {source}")
    tables = _jump_tables(d)
    counts = np.zeros(d.size, dtype=np.int64)
    for b, lo in enumerate(range(0, n_paths, _BATCH)):
        m = min(_BATCH, n_paths - lo)
        rng = _batch_rng(seed, 1, b)
        state = np.full(m, source, dtype=np.int64)
        tleft = np.full(m, float(t))
        alive = np.ones(m, dtype=bool)
        while True:
            idx = np.flatnonzero(alive)
            if idx.size == 0:
                break
            r = tables.rates[state[idx]]
            movable = r > 0
            idx = idx[movable]
            if idx.size == 0:
                break
            r = r[movable]
            hold = rng.exponential(1.0, size=idx.size) / r
            u = rng.random(idx.size)
            jumps = hold < tleft[idx]
            alive[idx[~jumps]] = False
            idx = idx[jumps]
            if idx.size == 0:
                continue
            tleft[idx] -= hold[jumps]
            state[idx] = _pick(tables, state[idx], u[jumps])
        counts += np.bincount(state, minlength=d.size)
    absorbed = int(counts[d.pinned].sum())
    return EmpiricalMeasure(counts=counts, n_paths=n_paths, masses=d.mass, absorbed=absorbed)


# -- Euler-Maruyama sampler on the continuous complex ---------------------------------


class _SdeModel:
    """Vectorized coefficient tables of one strip complex."""

    def __init__(self, sc: StripComplex):
        n_e = max(e.id for e in sc.graph.edges) + 1
        self.sigma0 = np.zeros(n_e)
        self.length = np.zeros(n_e)
        self.tail = np.zeros(n_e, dtype=np.int64)
        self.head = np.zeros(n_e, dtype=np.int64)
        self.ca = np.zeros(n_e)
        self.ga = np.zeros(n_e)
        self.cm = np.zeros(n_e)
        self.gm = np.zeros(n_e)
        for e in sc.graph.edges:
            a, m = sc.coeffs[e.id].a, sc.coeffs[e.id].m
            if a.kind not in (POWER, CONSTANT) or m.kind not in (POWER, CONSTANT):
                raise ParameterError("the walker needs symbolic (constant/power) coefficients")
            lo, _ = e.sigma_range
            self.sigma0[e.id] = lo
            self.length[e.id] = e.length
            self.tail[e.id] = e.tail
            self.head[e.id] = e.head
            self.ca[e.id], self.ga[e.id] = a.c, a.gamma
            self.cm[e.id], self.gm[e.id] = m.c, m.gamma
        # Walsh tables: continuation edge at v drawn with probability ~ a_e(v)
        nv = max(v.id for v in sc.graph.vertices) + 1
        self.v_indptr = np.zeros(nv + 1, dtype=np.int64)
        v_edges, v_cum, v_enter_tail = [], [], []
        self.v_boundary = np.zeros(nv, dtype=bool)
        for v in sc.graph.vertices:
            eids = sc.graph.incident(v.id)
            weights = []
            for eid in eids:
                e = sc.graph.edge(eid)
                at_tail = e.tail == v.id
                sig_v = e.sigma(0.0 if at_tail else e.length)
                weights.append(float(sc.coeffs[eid].a(sig_v)))
                v_edges.append(eid)
                v_enter_tail.append(at_tail)
            cum = np.cumsum(weights) / np.sum(weights)
            v_cum.extend(cum.tolist())
            self.v_indptr[v.id + 1] = self.v_indptr[v.id] + len(eids)
            self.v_boundary[v.id] = v.boundary
        self.v_edges = np.array(v_edges, dtype=np.int64)
        self.v_cum = np.array(v_cum)
        self.v_enter_tail = np.array(v_enter_tail, dtype=bool)
        self.max_vdeg = int(np.diff(self.v_indptr).max())

    def drift_diffusion(self, edge: np.ndarray, s: np.ndarray):
        sig = self.sigma0[edge] + s
        a = self.ca[edge] * sig ** self.ga[edge]
        da = self.ca[edge] * self.ga[edge] * sig ** (self.ga[edge] - 1.0)
        m = self.cm[edge] * sig ** self.gm[edge]
        return da / m, np.sqrt(2.0 * a / m)

    def pick_edge(self, vertices: np.ndarray, u: np.ndarray):
        pos = self.v_indptr[vertices].copy()
        hi = self.v_indptr[vertices + 1] - 1
        for _ in range(self.max_vdeg - 1):
            adv = (pos < hi) & (self.v_cum[pos] <= u)
            if not adv.any():
                break
            pos[adv] += 1
        return self.v_edges[pos], self.v_enter_tail[pos]


def _fold_interval(x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    width = hi - lo
    z = np.mod(x - lo, 2.0 * width)
    return lo + np.where(z <= width, z, 2.0 * width - z)


def sample_sde(sc: StripComplex, source: PointOnComplex, t: float, dt: float,
               n_paths: int, seed: int, grid: Grid,
               boundary_policy: str = "reflecting") -> EmpiricalMeasure:
    """Euler-Maruyama walker with the Walsh rule at vertices, binned to `grid`.

    Inside a strip the graph coordinate follows ds = (a'/m) dtau + sqrt(2a/m) dW
    and the fiber coordinate the driftless counterpart; a step that crosses a
    vertex stops there, draws the continuation edge with probability
    proportional to a_e(v) and spends its unused displacement on that edge.
    """
    if n_paths < 1:
        raise ParameterError("n_paths must be >= 1")
    if dt <= 0 or dt > t:
        raise ParameterError("need 0 < dt <= t")
    source = sc.check_point(source)
    if source.vertex is not None:
        raise DomainError("start the walker inside a strip, not on a manifold")
    model = _SdeModel(sc)
    has_fiber = sc.fiber.dimension == 1
    x_lo, x_hi = sc.fiber.x_range
    wrap = sc.fiber.kind == CIRCLE
    absorbing = boundary_policy == "absorbing"

    counts = np.zeros(grid.size, dtype=np.int64)
    absorbed_total = 0
    n_steps = max(1, round(t / dt))
    dt = t / n_steps
    sqdt = np.sqrt(dt)

    for b, lo in enumerate(range(0, n_paths, _BATCH)):
        m = min(_BATCH, n_paths - lo)
        rng = _batch_rng(seed, 2, b)
        edge = np.full(m, source.edge, dtype=np.int64)
        s = np.full(m, source.s)
        x = np.full(m, source.x)
        frozen = np.zeros(m, dtype=bool)
        frozen_vertex = np.zeros(m, dtype=np.int64)
        for _ in range(n_steps):
            live = ~frozen
            if not live.any():
                break
            drift, diff = model.drift_diffusion(edge[live], s[live])
            noise = rng.standard_normal((2, live.sum()))
            s_new = s[live] + drift * dt + diff * sqdt * noise[0]
            if has_fiber:
                x_new = x[live] + diff * sqdt * noise[1]
                if wrap:
                    x_new = x_lo + np.mod(x_new - x_lo, x_hi - x_lo)
                else:
                    x_new = _fold_interval(x_new, x_lo, x_hi)
                x[live] = x_new
            u_cross = rng.random(live.sum())
            s[live] = s_new
            live_idx = np.flatnonzero(live)
            below = s_new < 0.0
            above = s_new > model.length[edge[live]]
            for mask, at_tail in ((below, True), (above, False)):
                if not mask.any():
                    continue
                w = live_idx[mask]
                ucm = u_cross[mask]
                ecur = edge[w]
                vert = (model.tail[ecur] if at_tail else model.head[ecur])
                excess = -s[w] if at_tail else s[w] - model.length[ecur]
                if absorbing:
                    hit_boundary = model.v_boundary[vert]
                    if hit_boundary.any():
                        wb = w[hit_boundary]
                        frozen[wb] = True
                        frozen_vertex[wb] = vert[hit_boundary]
                        w = w[~hit_boundary]
                        vert = vert[~hit_boundary]
                        excess = excess[~hit_boundary]
                        ucm = ucm[~hit_boundary]
                if w.size == 0:
                    continue
                new_edge, enter_tail = model.pick_edge(vert, ucm)
                if np.any(excess > model.length[new_edge]):
                    raise NumericalError("dt too coarse: a step crossed beyond two vertices")
                edge[w] = new_edge
                s[w] = np.where(enter_tail, excess, model.length[new_edge] - excess)
        # bin: frozen walkers sit on their absorption manifold
        live = ~frozen
        for eid in np.unique(edge[live]):
            sel = live & (edge == eid)
            sig = grid.edge_sigma[eid]
            mids = 0.5 * (sig[:-1] + sig[1:])
            si = np.searchsorted(mids, model.sigma0[eid] + s[sel])
            if grid.nx == 1:
                dofs = grid.edge_dofs[eid][si, 0]
            else:
                jx = ((x[sel] - x_lo) / grid.dx).astype(np.int64)
                jx = np.mod(jx, grid.nx) if wrap else np.clip(jx, 0, grid.nx - 1)
                dofs = grid.edge_dofs[eid][si, jx]
            counts += np.bincount(dofs, minlength=grid.size)
        if frozen.any():
            for vid in np.unique(frozen_vertex[frozen]):
                sel = frozen & (frozen_vertex == vid)
                if grid.nx == 1:
                    dofs = np.full(sel.sum(), grid.vertex_dofs(vid)[0])
                else:
                    jx = ((x[sel] - x_lo) / grid.dx).astype(np.int64)
                    jx = np.mod(jx, grid.nx) if wrap else np.clip(jx, 0, grid.nx - 1)
                    dofs = grid.vertex_dofs(vid)[jx]
                counts += np.bincount(dofs, minlength=grid.size)
            absorbed_total += int(frozen.sum())
    return EmpiricalMeasure(counts=counts, n_paths=n_paths, masses=grid.node_mass,
                            absorbed=absorbed_total)


# -- exit problems and Green function ---------------------------------------------------


@dataclass
class ExitLaw:
    boundary_dofs: np.ndarray
    probabilities: np.ndarray
    capped_mass: float

    def pair(self, boundary_values: dict[int, float]) -> float:
        """Expectation of the boundary data under the exit law (P-harmonic pairing)."""
        vals = np.array([boundary_values.get(int(b), 0.0) for b in self.boundary_dofs])
        return float(np.dot(self.probabilities, vals))


def exit_distribution(d: Discretization, region, source: int, n_paths: int,
                      seed: int, max_jumps: int = 10**6) -> ExitLaw:
    """Empirical law of the first jump-chain state outside `region`.

    Holding times do not alter the exit law, so only the embedded chain is
    simulated; walkers still inside the region after `max_jumps` are reported
    as capped mass.
    """
    region_mask = np.zeros(d.size, dtype=bool)
    region_mask[np.asarray(list(region), dtype=np.int64)] = True
    if not region_mask[source]:
        raise DomainError("source must lie in the region")
    tables = _jump_tables(d)
    exit_counts: dict[int, int] = {}
    capped = 0
    for b, lo in enumerate(range(0, n_paths, _BATCH)):
        m = min(_BATCH, n_paths - lo)
        rng = _batch_rng(seed, 3, b)
        state = np.full(m, source, dtype=np.int64)
        inside = np.ones(m, dtype=bool)
        for _ in range(max_jumps):
            idx = np.flatnonzero(inside)
            if idx.size == 0:
                break
            stuck = tables.rates[state[idx]] <= 0
            if stuck.any():
                inside[idx[stuck]] = False
                capped += int(stuck.sum())
                idx = idx[~stuck]
                if idx.size == 0:
                    continue
            u = rng.random(idx.size)
            state[idx] = _pick(tables, state[idx], u)
            left = ~region_mask[state[idx]]
            inside[idx[left]] = False
        capped += int(inside.sum())
        exited = (~inside) & (~region_mask[state])
        for dof, cnt in zip(*np.unique(state[exited], return_counts=True)):
            exit_counts[int(dof)] = exit_counts.get(int(dof), 0) + int(cnt)
    dofs = np.array(sorted(exit_counts), dtype=np.int64)
    probs = np.array([exit_counts[int(k)] for k in dofs]) / n_paths
    return ExitLaw(boundary_dofs=dofs, probabilities=probs, capped_mass=capped / n_paths)


@dataclass
class GreenCurve:
    horizons: np.ndarray
    estimates: np.ndarray
    absorbed_fraction: float

    @property
    def saturation_ratio(self) -> float:
        """estimate(T_max) / estimate(T_max / 2) interpolated on the horizon grid."""
        t_max = self.horizons[-1]
        half = float(np.interp(t_max / 2.0, self.horizons, self.estimates))
        return float(self.estimates[-1] / half) if half > 0 else np.inf


def green_estimate(d: Discretization, xi: int, zeta: int, horizons, n_paths: int,
                   seed: int) -> GreenCurve:
    """Occupation-time estimate of int_0^T h(t, xi, zeta) dt for each horizon T.

    On transient (absorbing) models the curve flattens; its saturation ratio
    tending to 1 is the transience signature.
    """
    horizons = np.sort(np.asarray(horizons, dtype=float))
    if horizons.size == 0 or horizons[0] <= 0:
        raise ParameterError("need positive horizons")
    t_max = float(horizons[-1])
    tables = _jump_tables(d)
    occ = np.zeros(horizons.size)
    absorbed = 0
    for b, lo in enumerate(range(0, n_paths, _BATCH)):
        m = min(_BATCH, n_paths - lo)
        rng = _batch_rng(seed, 4, b)
        state = np.full(m, xi, dtype=np.int64)
        tleft = np.full(m, t_max)
        alive = np.ones(m, dtype=bool)
        while True:
            idx = np.flatnonzero(alive)
            if idx.size == 0:
                break
            r = tables.rates[state[idx]]
            movable = r > 0
            if not movable.all():
                absorbed += int((~movable).sum())
                alive[idx[~movable]] = False
                idx = idx[movable]
                r = r[movable]
                if idx.size == 0:
                    break
            hold = rng.exponential(1.0, size=idx.size) / r
            u = rng.random(idx.size)
            hold_eff = np.minimum(hold, tleft[idx])
            at_z = state[idx] == zeta
            if at_z.any():
                elapsed = t_max - tleft[idx][at_z]
                h_eff = hold_eff[at_z]
                for i, T in enumerate(horizons):
                    occ[i] += float(np.sum(np.clip(T - elapsed, 0.0, h_eff)))
            jumps = hold < tleft[idx]
            alive[idx[~jumps]] = False
            idx2 = idx[jumps]
            if idx2.size == 0:
                continue
            tleft[idx2] -= hold[jumps]
            state[idx2] = _pick(tables, state[idx2], u[jumps])
    estimates = occ / (n_paths * d.mass[zeta])
    return GreenCurve(horizons=horizons, estimates=estimates,
                      absorbed_fraction=absorbed / n_paths)
