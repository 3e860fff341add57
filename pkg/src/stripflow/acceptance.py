"""Acceptance suite: every checkable claim at a pinned tolerance.

Each criterion function returns a `CriterionResult`; `run_all` executes the
requested subset and prints one PASS/FAIL line per criterion.  The CLI
subcommand `stripflow accept` and tests/test_acceptance.py both drive this
module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .assembly import apply_generator, assemble, build_grid, gradient_sup
from .brownian import green_estimate, sample_ctmc
from .complexes import (Fiber, StripComplex, TreebolicExhaustion, approx_unity,
                        build_treebolic)
from .errors import StripflowError
from .graph import MetricGraph, Vertex, Edge, edge_exhaustion
from .heat import (gaussian_bound_check, heat_kernel, kirchhoff_residual,
                   smoothness_probe, solve_harmonic, spectral_bottom, step_heat,
                   total_mass)
from .profiles import EdgeCoefficients, Profile
from .quotients import (collapse_fiber, compare_projected_heat,
                        density_on_reference_grid, slice_plane)
from .subordination import resolvent_fourier_coefficient, resolvent_mass


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str


def _unit_coeffs(n: int) -> EdgeCoefficients:
    return EdgeCoefficients(phi=Profile.constant(1.0), psi=Profile.constant(1.0), n=n)


def _path_complex(n_edges: int = 1, fiber: Fiber | None = None) -> StripComplex:
    verts = [Vertex(i, boundary=(i in (0, n_edges))) for i in range(n_edges + 1)]
    edges = [Edge(i, i, i + 1, 1.0) for i in range(n_edges)]
    fiber = fiber or Fiber("point")
    coeffs = {i: _unit_coeffs(fiber.dimension) for i in range(n_edges)}
    return StripComplex(MetricGraph(verts, edges), fiber, coeffs)


def _star_complex() -> StripComplex:
    verts = [Vertex(0)] + [Vertex(i, boundary=True) for i in (1, 2, 3)]
    edges = [Edge(i, 0, i + 1, 1.0) for i in range(3)]
    coeffs = {i: _unit_coeffs(0) for i in range(3)}
    return StripComplex(MetricGraph(verts, edges), Fiber("point"), coeffs)


def _suite_small_discretizations():
    """Every acceptance complex with at most 400 degrees of freedom."""
    out = []
    d = assemble(_path_complex(1), build_grid(_path_complex(1), 5, 1))
    out.append(("path-5", d))
    star = _star_complex()
    out.append(("star", assemble(star, build_grid(star, 9, 1))))
    for alpha, beta in ((0.0, 1.0), (1.0, 0.5)):
        sc = build_treebolic(2, 2.0, alpha, beta, -1, 1, R=1.0)
        out.append((f"treebolic(a={alpha},b={beta})",
                    assemble(sc, build_grid(sc, 5, 4))))
    ring = _path_complex(2, Fiber("circle", 2.0 * np.pi))
    out.append(("circle-fiber", assemble(ring, build_grid(ring, 6, 8))))
    return out


# -- criteria -----------------------------------------------------------------------


def criterion_1_conservation() -> CriterionResult:
    worst = 0.0
    for alpha in (0.0, 1.0):
        for beta in (0.5, 1.0, 2.0):
            sc = build_treebolic(2, 2.0, alpha, beta, -2, 2, R=1.0)
            d = assemble(sc, build_grid(sc, 9, 18))
            ones = np.ones(d.size)
            m0 = total_mass(d, ones)
            for t in (0.1, 1.0):
                u = step_heat(d, ones, t, dt=t / 16.0)
                worst = max(worst, abs(total_mass(d, u) - m0) / m0)
    return CriterionResult(1, "conservation", worst <= 1e-10,
                           f"max relative mass defect {worst:.3e} (tol 1e-10)")


def criterion_2_kernel_symmetry() -> CriterionResult:
    sc = build_treebolic(2, 2.0, 0.0, 1.0, -2, 2, R=1.0)
    d = assemble(sc, build_grid(sc, 9, 18))
    rng = np.random.default_rng(2025)
    pool = rng.choice(d.size, size=16, replace=False)
    slices = {int(i): heat_kernel(d, int(i), 0.5, dt=0.5 / 64).values for i in pool}
    pairs = [(int(a), int(b)) for ai, a in enumerate(pool) for b in pool[ai + 1:]]
    rng.shuffle(pairs)
    worst = 0.0
    for i, j in pairs[:100]:
        scale = max(slices[i].max(), slices[j].max())
        worst = max(worst, abs(slices[i][j] - slices[j][i]) / scale)
    return CriterionResult(2, "kernel symmetry", worst <= 1e-8,
                           f"max |h(t,i,j)-h(t,j,i)|/max over 100 pairs: {worst:.3e}")


def criterion_3_kirchhoff_residual() -> CriterionResult:
    sc = build_treebolic(2, 2.0, 0.0, 0.5, -1, 1, R=1.0)
    v_int = [v.id for v in sc.graph.vertices if not v.boundary][0]
    e_src = sc.graph.child_edges(v_int)[0]
    hs, res_h, res_k = [], [], []
    for ns, nx in ((5, 4), (9, 8), (17, 16)):
        grid = build_grid(sc, ns, nx)
        d = assemble(sc, grid)
        bvals = {}
        for vid in sc.graph.boundary_vertices:
            for dof in grid.vertex_dofs(vid):
                bvals[int(dof)] = float(np.sin(grid.node_x[dof]) + grid.node_sigma[dof])
        u = solve_harmonic(d, bvals)
        res_h.append(kirchhoff_residual(d, u, v_int)[1])
        src = grid.bin_point(e_src.id, 0.45 * e_src.length, 0.37)
        k = heat_kernel(d, src, 0.5, dt=0.5 / 256)
        res_k.append(kirchhoff_residual(d, k.values, v_int)[1])
        hs.append(1.0 / (ns - 1))
        _, zero = kirchhoff_residual(d, np.ones(d.size), v_int)
    order_h = np.polyfit(np.log(hs), np.log(res_h), 1)[0]
    order_k = np.polyfit(np.log(hs), np.log(res_k), 1)[0]
    ok = order_h >= 0.9 and order_k >= 0.9 and zero == 0.0
    return CriterionResult(3, "Kirchhoff residual", bool(ok),
                           f"fitted orders: harmonic {order_h:.2f}, heat kernel {order_k:.2f} "
                           f"(need >= 0.9); constant-field residual {zero}")


def criterion_4_oracle_equivalence() -> CriterionResult:
    details, ok = [], True
    t = 0.5
    for name, d in _suite_small_discretizations():
        if d.size > 400:
            ok = False
            details.append(f"{name}: {d.size} dofs exceeds the 400 budget")
            continue
        L = -(d.stiffness.toarray() / d.mass[:, None])
        rng = np.random.default_rng(7)
        f0 = rng.random(d.size)
        exact = sla.expm(t * L) @ f0
        cn = step_heat(d, f0, t, dt=t / 2048.0)
        err = float(np.abs(cn - exact).max())
        src = int(np.argmax(d.mass))
        emp = sample_ctmc(d, src, t, n_paths=10**5, seed=99)
        p = sla.expm(t * L)[src]
        se = np.sqrt(np.maximum(p * (1 - p), 0.0) / emp.n_paths)
        within = np.abs(emp.counts / emp.n_paths - p) <= 3.0 * se + 1e-15
        frac = float(np.mean(within))
        ok = ok and err <= 1e-8 and frac >= 0.95
        details.append(f"{name}({d.size}): CN err {err:.2e}, CTMC 3-sigma coverage {frac:.3f}")
    return CriterionResult(4, "oracle equivalence", bool(ok), "; ".join(details))


def _projection_errors(target_kind: str, resolutions, reference_ns: int, wrong_beta=None):
    """Relative L1 errors of the pooled kernel against an intrinsic reference solver.

    The matched-grid aggregation is exact by construction, so the refinement
    content is carried by comparing the pooled density (interpolated in log
    sigma) against the intrinsic target solver at a near-continuum reference
    resolution: that error is genuine source discretization error and must
    shrink when the source grid refines.
    """
    sc = build_treebolic(2, 2.0, 0.0, 1.0, -2, 2, R=1.0)
    nx_all = resolutions[0][1]
    if target_kind == "tree":
        target, qmap = collapse_fiber(sc)
        nx_t = 1
    else:
        target, qmap = slice_plane(sc)
        nx_t = nx_all
    t = 0.5
    # every grid carries the interior level-0 vertex layer, so a vertex source
    # starts all kernels from the identical point mass
    v0 = [v.id for v in sc.graph.vertices if v.level == 0 and not v.boundary][0]
    grid_ref = build_grid(target, reference_ns, nx_t)
    d_ref = assemble(target, grid_ref)
    src_ref = int(grid_ref.vertex_dofs(qmap.vertex_map[v0])[grid_ref.nx // 2])
    dens_ref = heat_kernel(d_ref, src_ref, t, dt=t / 64.0).values
    norm = float(np.sum(np.abs(dens_ref) * d_ref.mass))

    errors, matched_err = [], None
    for idx, (ns, nx) in enumerate(resolutions):
        grid_s = build_grid(sc, ns, nx)
        d_s = assemble(sc, grid_s)
        src = int(grid_s.vertex_dofs(v0)[grid_s.nx // 2])
        kern = heat_kernel(d_s, src, t, dt=t / 64.0)
        if idx == 0:
            d_img = assemble(target, build_grid(target, ns, 1 if nx_t == 1 else nx))
            matched_err = compare_projected_heat(d_s, d_img, qmap, src, t).rel_l1
        dens = density_on_reference_grid(d_s, qmap, kern.values, grid_ref)
        errors.append(float(np.sum(np.abs(dens - dens_ref) * d_ref.mass)) / norm)
    wrong_err = None
    if wrong_beta is not None:
        wrong = build_treebolic(1, 2.0, 0.0, wrong_beta,
                                sc.graph.tree["k_min"], sc.graph.tree["k_max"], 1.0)
        grid_w = build_grid(wrong, reference_ns, nx_t)
        d_w = assemble(wrong, grid_w)
        dens_w = heat_kernel(d_w, src_ref, t, dt=t / 64.0).values
        ns, nx = resolutions[-1]
        grid_s = build_grid(sc, ns, nx)
        d_s = assemble(sc, grid_s)
        src = int(grid_s.vertex_dofs(v0)[grid_s.nx // 2])
        kern = heat_kernel(d_s, src, t, dt=t / 64.0)
        dens = density_on_reference_grid(d_s, qmap, kern.values, grid_w)
        wrong_err = float(np.sum(np.abs(dens - dens_w) * d_w.mass)) / norm
    return matched_err, errors, wrong_err


def criterion_5_projection_tree() -> CriterionResult:
    matched, errs, _ = _projection_errors("tree", [(6, 6), (11, 6)], reference_ns=41)
    ok = matched <= 0.02 and errs[0] <= 0.02 and errs[1] < errs[0]
    return CriterionResult(5, "projection onto the tree", bool(ok),
                           f"matched-grid err {matched:.2e}; independent-grid errs "
                           f"{errs[0]:.4f} -> {errs[1]:.4f} (tol 0.02, strictly decreasing)")


def criterion_6_projection_plane() -> CriterionResult:
    matched, errs, wrong = _projection_errors("plane", [(6, 6), (11, 6)],
                                              reference_ns=41, wrong_beta=1.0)
    ok = matched <= 0.02 and errs[0] <= 0.02 and errs[1] < errs[0] and wrong > 0.10
    return CriterionResult(6, "projection onto the plane", bool(ok),
                           f"matched-grid err {matched:.2e}; independent-grid errs "
                           f"{errs[0]:.4f} -> {errs[1]:.4f}; negative control "
                           f"(beta instead of beta*p) err {wrong:.3f} (> 0.10 required)")


def criterion_7_spectral_bottom() -> CriterionResult:
    ladders = [(-4, 4), (-5, 5), (-6, 6)]
    lams = {}
    for beta in (0.125, 0.25, 0.5, 1.0, 2.0):
        vals = []
        for k_min, k_max in ladders:
            sc = build_treebolic(2, 2.0, 1.0, beta, k_min, k_max, R=1.0)
            d = assemble(sc, build_grid(sc, 6, 2), boundary_policy="absorbing")
            vals.append(spectral_bottom(d))
        lams[beta] = np.array(vals)
    monotone = all(np.all(np.diff(v) < 0) for v in lams.values())
    crit_drop = 1.0 - lams[0.5][-1] / lams[0.5][0]
    floor_drops = {b: 1.0 - lams[b][-1] / lams[b][-2] for b in (0.125, 2.0)}
    ok = monotone and crit_drop >= 0.5 and all(v <= 0.10 for v in floor_drops.values())
    return CriterionResult(7, "spectral-bottom criterion", bool(ok),
                           f"critical beta=1/2 drop {crit_drop:.2f} (>= 0.5); "
                           f"last-step drops beta=1/8: {floor_drops[0.125]:.3f}, "
                           f"beta=2: {floor_drops[2.0]:.3f} (<= 0.10); "
                           f"domain monotone: {monotone}")


def criterion_8_transience() -> CriterionResult:
    sc = build_treebolic(2, 2.0, 0.0, 1.0, -2, 2, R=1.0)
    grid = build_grid(sc, 5, 4)
    d = assemble(sc, grid, boundary_policy="absorbing")
    e0 = [e for e in sc.graph.edges if e.level == 0][0]
    xi = int(grid.edge_dofs[e0.id][2, 2])
    zeta = int(grid.edge_dofs[e0.id][1, 1])
    curve = green_estimate(d, xi, zeta, horizons=[0.5, 1, 2, 4, 8, 16],
                           n_paths=10**5, seed=5)
    ratio = float(curve.estimates[-1] / curve.estimates[-2])
    ok = 1.0 <= ratio <= 1.1
    return CriterionResult(8, "transience signature", bool(ok),
                           f"est(2T)/est(T) at T=8: {ratio:.6f} (need within [1.0, 1.1])")


def criterion_9_gaussian_bound() -> CriterionResult:
    sc = build_treebolic(2, 2.0, 0.0, 1.0, -2, 2, R=1.0)
    details, ok = [], True
    for t in (0.25, 1.0):
        cs = []
        for ns, nx in ((5, 4), (7, 6)):
            grid = build_grid(sc, ns, nx)
            d = assemble(sc, grid)
            e0 = [e for e in sc.graph.edges if e.level == 0][0]
            src = int(grid.edge_dofs[e0.id][len(grid.edge_sigma[e0.id]) // 2, grid.nx // 2])
            kern = heat_kernel(d, src, t, dt=t / 256, scheme="implicit_euler")
            rep = gaussian_bound_check(d, kern, 0.5)
            finite = np.isfinite(rep.c_star) and rep.n_nonpositive == 0
            ok = ok and finite
            cs.append(rep.c_star)
        drift = abs(cs[1] - cs[0]) / abs(cs[0])
        ok = ok and drift <= 0.2
        details.append(f"t={t}: C*={cs[0]:.3f}/{cs[1]:.3f}, drift {drift:.3f}")
    return CriterionResult(9, "Gaussian bound", bool(ok), "; ".join(details))


def criterion_10_exhaustions() -> CriterionResult:
    details, ok = [], True
    # edge exhaustion: slope bound and vertex flatness
    n_edges = 12
    verts = [Vertex(i, boundary=(i in (0, n_edges))) for i in range(n_edges + 1)]
    edges = [Edge(i, i, i + 1, 1.0) for i in range(n_edges)]
    g = MetricGraph(verts, edges)
    rho = edge_exhaustion(g, epsilon=0.1, origin=0)
    worst_slope, worst_flat = 0.0, 0.0
    for e in g.edges:
        s = np.linspace(0.0, e.length, 257)
        vals = np.asarray(rho.value(e.id, s))
        worst_slope = max(worst_slope, float(np.abs(np.diff(vals) / np.diff(s)).max()))
        near_tail = vals[s <= 0.1]
        near_head = vals[s >= e.length - 0.1]
        worst_flat = max(worst_flat, float(np.ptp(near_tail)), float(np.ptp(near_head)))
    ok = ok and worst_slope <= 1.0 + 1e-8 and worst_flat == 0.0 and rho.vertex_values[0] == 0.0
    details.append(f"edge: max slope {worst_slope:.12f}, vertex flat defect {worst_flat}")
    # approximation of unity: gradient halves with the scale
    coeffs = {i: _unit_coeffs(0) for i in range(n_edges)}
    sc = StripComplex(g, Fiber("point"), coeffs)
    grid = build_grid(sc, 33, 1)
    g1 = gradient_sup(grid, approx_unity(sc, grid, 1.0, exhaustion="edge", origin=0)).max()
    g2 = gradient_sup(grid, approx_unity(sc, grid, 2.0, exhaustion="edge", origin=0)).max()
    ok = ok and g2 <= 0.6 * g1
    details.append(f"unity: sup|grad rho_2n| / sup|grad rho_n| = {g2 / g1:.3f} (<= 0.6)")
    # treebolic exhaustion: bounds stable across truncation depths
    grads, laps = [], []
    for depth in (2, 3, 4):
        sc = build_treebolic(2, 2.0, 0.0, 1.0, -depth, depth, R=2.0)
        grid = build_grid(sc, 7, 6)
        d = assemble(sc, grid)
        ex = TreebolicExhaustion(sc)
        vals = np.array([ex.value(grid.node_point(i)) for i in range(grid.size)])
        grads.append(float(gradient_sup(grid, vals, interior_only=True).max()))
        inner = np.ones(d.size, bool)
        for vid in sc.graph.boundary_vertices:
            inner[grid.vertex_dofs(vid)] = False
        laps.append(float(np.abs(apply_generator(d, vals)[inner]).max()))
    stable = (grads[2] - grads[1] <= 0.7 * (grads[1] - grads[0]) + 1e-12
              and laps[2] - laps[1] <= 0.7 * (laps[1] - laps[0]) + 1e-12
              and max(grads) <= 7.0 and max(laps) <= 45.0)
    ok = ok and stable
    details.append(f"treebolic: sup|grad| {['%.2f' % v for v in grads]}, "
                   f"sup|A rho| {['%.1f' % v for v in laps]} (caps 7 / 45, shrinking increments)")
    return CriterionResult(10, "exhaustion invariants", bool(ok), "; ".join(details))


def criterion_11_subordination() -> CriterionResult:
    circle = Fiber("circle", 2.0 * np.pi)
    errs = [abs(resolvent_fourier_coefficient(circle, k) - 1.0 / (1.0 + k))
            for k in range(9)]
    mass = resolvent_mass(circle)
    ok = max(errs) <= 1e-6 and mass <= 1.0 + 1e-8
    return CriterionResult(11, "subordination identities", bool(ok),
                           f"max Fourier defect {max(errs):.2e} (tol 1e-6); "
                           f"mass {mass:.12f} (<= 1 + 1e-8)")


def criterion_12_smoothness_probe() -> CriterionResult:
    sc = build_treebolic(2, 2.0, 0.0, 0.5, -1, 1, R=1.0)
    v_int = [v.id for v in sc.graph.vertices if not v.boundary][0]
    e_src = sc.graph.child_edges(v_int)[0]
    discs = [assemble(sc, build_grid(sc, ns, 12)) for ns in (9, 17, 33, 65)]

    def solver(d):
        src = d.grid.bin_point(e_src.id, 0.45 * e_src.length, 0.37)
        return heat_kernel(d, src, 0.5, dt=0.5 / 512).values

    rep = smoothness_probe(discs, solver, v_int, x_position=0.1)
    tol = max(float(rep.s_cauchy.max()), 1e-12)
    jumps = [abs(rep.s_limits[i] - rep.s_limits[j])
             for i in range(3) for j in range(i + 1, 3)]
    xtol = max(float(rep.x_cauchy.max()), 1e-9)
    xdiff = float(np.abs(rep.x_limits - rep.x_limits[0]).max())
    ok = min(jumps) > 5.0 * tol and xdiff <= xtol
    return CriterionResult(12, "one-sided smoothness", bool(ok),
                           f"s-derivative jumps {['%.3g' % j for j in jumps]} vs 5*tol "
                           f"{5 * tol:.3g}; fiber-derivative mismatch {xdiff:.2e} "
                           f"(tol {xtol:.2e})")


CRITERIA = [
    criterion_1_conservation,
    criterion_2_kernel_symmetry,
    criterion_3_kirchhoff_residual,
    criterion_4_oracle_equivalence,
    criterion_5_projection_tree,
    criterion_6_projection_plane,
    criterion_7_spectral_bottom,
    criterion_8_transience,
    criterion_9_gaussian_bound,
    criterion_10_exhaustions,
    criterion_11_subordination,
    criterion_12_smoothness_probe,
]


def run_all(numbers=None, verbose: bool = True) -> list[CriterionResult]:
    results = []
    for fn in CRITERIA:
        number = int(fn.__name__.split("_")[1])
        if numbers and number not in numbers:
            continue
        try:
            res = fn()
        except StripflowError as exc:  # a failed precondition is a failed criterion
            res = CriterionResult(number, fn.__name__, False, f"error: {exc}")
        results.append(res)
        if verbose:
            status = "PASS" if res.passed else "FAIL"
            print(f"[{status}] criterion {res.number:2d} ({res.name}): {res.detail}")
    return results
