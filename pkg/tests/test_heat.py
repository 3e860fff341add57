import numpy as np
import pytest
import scipy.linalg as sla

from stripflow import (assemble, build_grid, build_treebolic, gaussian_bound_check,
                       heat_kernel, kirchhoff_residual, smoothness_probe,
                       solve_harmonic, spectral_bottom, step_heat, total_mass)
from stripflow.errors import ConfigurationError, DomainError, ParameterError
from conftest import path_complex, star_complex


@pytest.fixture(scope="module")
def tb_disc():
    sc = build_treebolic(2, 2.0, 0.0, 1.0, -1, 1, R=1.0)
    return assemble(sc, build_grid(sc, 5, 4))


class TestStepHeat:
    def test_preserves_constants(self, tb_disc):
        u = step_heat(tb_disc, np.ones(tb_disc.size), t=0.5, dt=0.05)
        assert np.abs(u - 1.0).max() <= 1e-10

    def test_ergodic_limit(self, tb_disc):
        rng = np.random.default_rng(0)
        f0 = rng.random(tb_disc.size)
        lam2 = spectral_bottom_nonzero(tb_disc)
        t = 20.0 / lam2
        u = step_heat(tb_disc, f0, t, dt=t / 256)
        mean = total_mass(tb_disc, f0) / tb_disc.mass.sum()
        assert np.abs(u - mean).max() / abs(mean) <= 1e-6

    def test_matches_dense_exponential(self):
        sc = path_complex(1)
        d = assemble(sc, build_grid(sc, 5, 1))
        rng = np.random.default_rng(3)
        f0 = rng.random(d.size)
        t = 0.7
        L = -(d.stiffness.toarray() / d.mass[:, None])
        exact = sla.expm(t * L) @ f0
        cn = step_heat(d, f0, t, dt=t / 2048)
        assert np.abs(cn - exact).max() <= 1e-8

    def test_implicit_euler_positivity_and_range(self, tb_disc):
        rng = np.random.default_rng(1)
        f0 = rng.random(tb_disc.size)  # values in [0, 1]
        u = step_heat(tb_disc, f0, t=0.3, dt=0.1, scheme="implicit_euler")
        assert u.min() >= -1e-14
        assert u.max() <= f0.max() + 1e-12
        assert u.min() >= f0.min() - 1e-12

    def test_semigroup_property(self, tb_disc):
        rng = np.random.default_rng(2)
        f0 = rng.random(tb_disc.size)
        dt = 1.0 / 128
        one_shot = step_heat(tb_disc, f0, 1.0, dt)
        two_step = step_heat(tb_disc, step_heat(tb_disc, f0, 0.5, dt), 0.5, dt)
        assert np.abs(one_shot - two_step).max() <= 1e-8

    def test_parameter_errors(self, tb_disc):
        with pytest.raises(ParameterError):
            step_heat(tb_disc, np.ones(tb_disc.size), t=1.0, dt=2.0)
        with pytest.raises(ParameterError):
            step_heat(tb_disc, np.ones(tb_disc.size), t=1.0, dt=0.1, scheme="leapfrog")


def spectral_bottom_nonzero(d):
    import scipy.sparse as sp
    import scipy.sparse.linalg as spla

    idx, K, m = d.interior_system()
    vals = spla.eigsh(K, k=2, M=sp.diags(m).tocsc(), sigma=-1e-8, which="LM",
                      return_eigenvectors=False)
    return float(np.sort(vals)[-1])


class TestHeatKernel:
    def test_symmetry_random_pairs(self, tb_disc):
        rng = np.random.default_rng(5)
        pool = rng.choice(tb_disc.size, 8, replace=False)
        slices = {int(i): heat_kernel(tb_disc, int(i), 0.4).values for i in pool}
        for i in pool:
            for j in pool:
                if i < j:
                    scale = max(slices[int(i)].max(), 1e-300)
                    assert abs(slices[int(i)][j] - slices[int(j)][i]) / scale <= 1e-8

    def test_conservation_reflecting(self, tb_disc):
        k = heat_kernel(tb_disc, 7, 0.8)
        assert k.retained_mass == pytest.approx(1.0, abs=1e-8)
        assert k.values.min() >= -1e-9

    def test_short_time_localization(self, tb_disc):
        grid = tb_disc.grid
        h_min = min(np.diff(grid.edge_sigma[e.id]).min() for e in tb_disc.sc.graph.edges)
        t = 0.05 * h_min**2
        src = 12
        k = heat_kernel(tb_disc, src, t, dt=t / 32, scheme="implicit_euler")
        assert k.values[src] * tb_disc.mass[src] > 0.99

    def test_rough_data_spike_damped(self):
        # Crank-Nicolson alone leaves an undamped spike at the source on fine
        # grids; the Rannacher start must remove it
        sc = build_treebolic(2, 2.0, 0.0, 1.0, -2, 2, R=1.0)
        from stripflow.quotients import collapse_fiber
        tree, _ = collapse_fiber(sc)
        vals = []
        for ns in (21, 81):
            d = assemble(tree, build_grid(tree, ns, 1))
            src = int(d.grid.vertex_dofs(3)[0])
            vals.append(heat_kernel(d, src, 0.5, dt=0.5 / 64).values[src])
        assert vals[1] == pytest.approx(vals[0], rel=0.02)

    def test_source_validation(self, tb_disc):
        with pytest.raises(DomainError):
            heat_kernel(tb_disc, tb_disc.size + 3, 0.5)


class TestSpectralBottom:
    def test_reflecting_kernel_mode(self, tb_disc):
        assert spectral_bottom(tb_disc) <= 1e-8

    def test_dirichlet_monotone_in_domain(self):
        lams = []
        for k in (1, 2, 3):
            sc = build_treebolic(2, 2.0, 1.0, 0.5, -k, k, R=1.0)
            d = assemble(sc, build_grid(sc, 5, 2), boundary_policy="absorbing")
            lams.append(spectral_bottom(d))
        assert lams[0] > lams[1] > lams[2] > 0.0

    def test_off_critical_floor(self):
        # q^(1-alpha) = 2 != beta p = 4: the Dirichlet bottom stays above a floor
        lams = []
        for k in (2, 3, 4):
            sc = build_treebolic(2, 2.0, 0.0, 2.0, -k, k, R=1.0)
            d = assemble(sc, build_grid(sc, 5, 2), boundary_policy="absorbing")
            lams.append(spectral_bottom(d))
        assert lams[-1] > 0.01
        assert 1.0 - lams[-1] / lams[-2] <= 0.25


class TestSolveHarmonic:
    def test_constant_boundary_data(self, tb_disc):
        grid = tb_disc.grid
        bvals = {}
        for vid in tb_disc.sc.graph.boundary_vertices:
            for dof in grid.vertex_dofs(vid):
                bvals[int(dof)] = 0.7
        u = solve_harmonic(tb_disc, bvals)
        assert np.allclose(u, 0.7, atol=1e-10)

    def test_three_resistor_star(self):
        sc = star_complex()
        grid = build_grid(sc, 9, 1)
        d = assemble(sc, grid)
        leaves = [int(grid.vertex_dofs(i)[0]) for i in (1, 2, 3)]
        u = solve_harmonic(d, {leaves[0]: 0.0, leaves[1]: 0.0, leaves[2]: 1.0})
        assert u[int(grid.vertex_dofs(0)[0])] == pytest.approx(1.0 / 3.0, abs=1e-12)

    def test_maximum_principle_random_data(self, tb_disc, rng):
        grid = tb_disc.grid
        boundary = [int(dof) for vid in tb_disc.sc.graph.boundary_vertices
                    for dof in grid.vertex_dofs(vid)]
        for _ in range(25):
            bvals = {dof: float(v) for dof, v in zip(boundary, rng.random(len(boundary)))}
            u = solve_harmonic(tb_disc, bvals)
            lo, hi = min(bvals.values()), max(bvals.values())
            assert u.min() >= lo - 1e-12 and u.max() <= hi + 1e-12

    def test_empty_boundary_rejected(self, tb_disc):
        with pytest.raises(ConfigurationError):
            solve_harmonic(tb_disc, {})


class TestKirchhoffResidual:
    def test_constant_field_exactly_zero(self, tb_disc):
        v = [v.id for v in tb_disc.sc.graph.vertices if not v.boundary][0]
        res, mx = kirchhoff_residual(tb_disc, np.ones(tb_disc.size), v)
        assert mx == 0.0

    def test_boundary_vertex_rejected(self, tb_disc):
        v = tb_disc.sc.graph.boundary_vertices[0]
        with pytest.raises(DomainError):
            kirchhoff_residual(tb_disc, np.ones(tb_disc.size), v)

    def test_treebolic_reduction_identity(self):
        from stripflow.heat import _one_sided_sigma_derivative
        beta = 0.5
        sc = build_treebolic(2, 2.0, 0.0, beta, -1, 1, R=1.0)
        grid = build_grid(sc, 9, 8)
        d = assemble(sc, grid)
        rng = np.random.default_rng(4)
        f = rng.random(d.size)
        v = [v.id for v in sc.graph.vertices if not v.boundary][0]
        res, _ = kirchhoff_residual(d, f, v)
        below = sc.graph.parent_edge(v)
        dy_b = _one_sided_sigma_derivative(grid, f, below.id, at_tail=False)
        dy_u = sum(_one_sided_sigma_derivative(grid, f, e.id, at_tail=True)
                   for e in sc.graph.child_edges(v))
        k = sc.graph.vertex(v).level
        manual = beta**k * (-dy_b + beta * dy_u)
        assert np.abs(res - manual).max() <= 1e-12 * np.abs(res).max()

    def test_harmonic_residual_decays(self):
        sc = build_treebolic(2, 2.0, 0.0, 0.5, -1, 1, R=1.0)
        v = [v.id for v in sc.graph.vertices if not v.boundary][0]
        hs, resids = [], []
        for ns, nx in ((5, 4), (9, 8), (17, 16)):
            grid = build_grid(sc, ns, nx)
            d = assemble(sc, grid)
            bvals = {}
            for vid in sc.graph.boundary_vertices:
                for dof in grid.vertex_dofs(vid):
                    bvals[int(dof)] = float(np.cos(grid.node_x[dof]) * grid.node_sigma[dof])
            u = solve_harmonic(d, bvals)
            resids.append(kirchhoff_residual(d, u, v)[1])
            hs.append(1.0 / (ns - 1))
        order = np.polyfit(np.log(hs), np.log(resids), 1)[0]
        assert order >= 0.9


class TestGaussianBound:
    def test_finite_and_monotone_in_epsilon(self, tb_disc):
        k = heat_kernel(tb_disc, 11, 0.5, dt=0.5 / 128, scheme="implicit_euler")
        rep1 = gaussian_bound_check(tb_disc, k, 0.25)
        rep2 = gaussian_bound_check(tb_disc, k, 0.75)
        assert np.isfinite(rep1.c_star) and rep1.n_nonpositive == 0
        assert rep1.c_star >= rep2.c_star  # smaller epsilon penalizes more

    def test_uniform_limit_attained_far_away(self):
        # compact reflecting complex at large t: the supremum sits at the
        # farthest node and equals log h + diam^2 / (4 (1+eps) t)
        sc = path_complex(2)
        d = assemble(sc, build_grid(sc, 9, 1))
        src = int(d.grid.vertex_dofs(0)[0])
        k = heat_kernel(d, src, 50.0, dt=1.0, scheme="implicit_euler")
        rep = gaussian_bound_check(d, k, 0.5)
        import scipy.sparse.csgraph as csgraph
        dist = csgraph.dijkstra(d.grid.metric_graph_matrix(), indices=[src])[0]
        far = int(np.argmax(dist))
        assert rep.argmax == far
        expected = np.log(k.values[far]) + dist[far] ** 2 / (4 * 1.5 * 50.0)
        assert rep.c_star == pytest.approx(expected, rel=1e-12)

    def test_epsilon_validation(self, tb_disc):
        k = heat_kernel(tb_disc, 3, 0.5)
        with pytest.raises(ParameterError):
            gaussian_bound_check(tb_disc, k, 1.5)


class TestSmoothnessProbe:
    def test_symmetric_data_gives_equal_limits(self):
        # source in the parent strip: the two upper strips mirror each other
        # and the Kirchhoff relation forces matching one-sided derivatives
        sc = build_treebolic(2, 2.0, 0.0, 0.5, -1, 1, R=1.0)
        v = [v.id for v in sc.graph.vertices if not v.boundary][0]
        e0 = sc.graph.parent_edge(v)
        discs = [assemble(sc, build_grid(sc, ns, 8)) for ns in (9, 17, 33)]

        def solver(d):
            src = d.grid.bin_point(e0.id, 0.5 * e0.length, 0.0)
            return heat_kernel(d, src, 0.5, dt=0.5 / 256).values

        rep = smoothness_probe(discs, solver, v, x_position=0.0)
        ups = [i for i, eid in enumerate(rep.edges) if sc.graph.edge(eid).tail == v]
        tol = max(rep.s_cauchy.max(), 1e-12)
        assert abs(rep.s_limits[ups[0]] - rep.s_limits[ups[1]]) <= 3 * tol

    def test_ladder_length_validated(self, tb_disc):
        with pytest.raises(ParameterError):
            smoothness_probe([tb_disc], lambda d: np.ones(d.size), 0)
