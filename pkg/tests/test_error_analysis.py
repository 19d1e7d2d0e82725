import math

import numpy as np
import pytest

from fracdiff.error_analysis import (
    StudyRow,
    direct_energy_error_small,
    dof_gap,
    energy_error,
    exact_data_product,
    observed_orders,
    run_convergence_study,
    run_level,
    trace_hs_error,
)
from fracdiff.fem1d import assemble_weighted_matrices
from fracdiff.femomega import assemble_load, assemble_omega_matrices, build_grid
from fracdiff.meshing import build_ymesh, select_params_h, select_params_hp
from fracdiff.solver import build_system, cylinder_rhs, solve
from fracdiff.spectral import benchmark_problem, solve_fractional


def solve_benchmark(s, d, n, scheme="hfem", tol=1e-11):
    problem = benchmark_problem(s, d)
    grid = build_grid(d, n)
    lam1 = problem.domain.lambda1
    if scheme == "hfem":
        params = select_params_h(grid.h_omega, s, lam1)
    else:
        params = select_params_hp(grid.h_omega, s, lam1)
    mesh = build_ymesh(params)
    weighted = assemble_weighted_matrices(mesh, alpha=problem.alpha)
    system = build_system(assemble_omega_matrices(grid), weighted)
    rhs = cylinder_rhs(system, assemble_load(grid, problem))
    sol = solve(system, rhs, rel_tol=tol, preconditioner="tensor")
    return problem, grid, weighted, sol


def exact_nodal_trace(problem, grid):
    u = solve_fractional(problem)
    if grid.d == 1:
        return u(grid.interior_nodes)
    x1, x2 = np.meshgrid(grid.interior_nodes, grid.interior_nodes, indexing="ij")
    pts = np.stack([x1, x2], axis=-1)
    return u(pts).reshape(-1)


class TestEnergyError:
    def test_zero_solution_closed_form(self):
        # error of the zero trace: d_s * lambda_1^s / 4 under the square root
        for s in [0.2, 0.5, 0.8]:
            problem = benchmark_problem(s, 2)
            grid = build_grid(2, 8)
            err = energy_error(problem, grid, np.zeros(grid.n_dofs))
            want = math.sqrt(problem.d_s * (2 * math.pi**2) ** s / 4.0)
            assert err == pytest.approx(want, rel=1e-9)
        problem = benchmark_problem(0.5, 2)
        err = energy_error(problem, build_grid(2, 8), np.zeros(49))
        assert err == pytest.approx(1.0539073652554058, rel=1e-9)

    def test_exact_data_product(self):
        problem = benchmark_problem(0.5, 2)
        assert exact_data_product(problem) == pytest.approx(
            math.sqrt(2.0) * math.pi / 4.0, rel=1e-14
        )

    def test_exact_trace_gives_small_error(self):
        problem = benchmark_problem(0.6, 1)
        errs = []
        for n in (16, 32, 64):
            grid = build_grid(1, n)
            errs.append(energy_error(problem, grid, exact_nodal_trace(problem, grid)))
        assert errs[0] < 0.2
        assert errs[1] < errs[0] and errs[2] < errs[1]

    @pytest.mark.parametrize("scheme", ["hfem", "hpfem"])
    @pytest.mark.parametrize("s", [0.2, 0.5, 0.8])
    def test_errors_decrease_along_refinement(self, scheme, s):
        rows = run_convergence_study(scheme, s, 1, levels=4)
        errs = [r.energy_error for r in rows]
        assert all(e2 < e1 for e1, e2 in zip(errs, errs[1:]))

    def test_inconsistent_trace_rejected(self):
        problem = benchmark_problem(0.5, 1)
        grid = build_grid(1, 8)
        giant = 100.0 * exact_nodal_trace(problem, grid)
        with pytest.raises(ValueError):
            energy_error(problem, grid, giant)


class TestDirectEnergyError:
    def test_zero_data(self):
        from fracdiff.spectral import BoxDomain, FractionalProblem, modal_function
        from fracdiff.solver import SolutionTensor

        domain = BoxDomain(1)
        problem = FractionalProblem(
            s=0.5, domain=domain, f=modal_function(domain, [((1,), 0.0)])
        )
        grid = build_grid(1, 6)
        params = select_params_h(grid.h_omega, 0.5, domain.lambda1)
        mesh = build_ymesh(params)
        weighted = assemble_weighted_matrices(mesh, alpha=0.0)
        sol = SolutionTensor(
            coefficients=np.zeros((grid.n_dofs, weighted.n_dofs)),
            iterations=0,
            residual=0.0,
        )
        assert direct_energy_error_small(problem, grid, weighted, sol) == pytest.approx(
            0.0, abs=1e-12
        )

    @pytest.mark.parametrize("s", [0.3, 0.5, 0.75])
    @pytest.mark.parametrize("scheme", ["hfem", "hpfem"])
    def test_agrees_with_identity(self, s, scheme):
        problem, grid, weighted, sol = solve_benchmark(s, 1, 24, scheme)
        assert sol.coefficients.size <= 5000
        via_identity = energy_error(problem, grid, sol.trace)
        direct = direct_energy_error_small(problem, grid, weighted, sol)
        assert abs(direct - via_identity) <= 0.02 * via_identity

    def test_agrees_with_identity_2d(self):
        problem, grid, weighted, sol = solve_benchmark(0.7, 2, 8)
        assert sol.coefficients.size <= 5000
        via_identity = energy_error(problem, grid, sol.trace)
        direct = direct_energy_error_small(problem, grid, weighted, sol)
        assert abs(direct - via_identity) <= 0.02 * via_identity

    def test_quadrature_self_convergence(self):
        problem, grid, weighted, sol = solve_benchmark(0.4, 1, 12)
        coarse = direct_energy_error_small(problem, grid, weighted, sol, nx_gauss=6, ny_extra=12)
        fine = direct_energy_error_small(problem, grid, weighted, sol, nx_gauss=12, ny_extra=24)
        assert abs(coarse - fine) <= 1e-6 * fine

    def test_size_guard(self):
        problem, grid, weighted, sol = solve_benchmark(0.5, 2, 32)
        assert sol.coefficients.size > 5000
        with pytest.raises(ValueError):
            direct_energy_error_small(problem, grid, weighted, sol)


class TestTraceHsError:
    def test_zero_trace_gives_solution_norm(self):
        problem = benchmark_problem(0.6, 2)
        grid = build_grid(2, 12)
        lam = 2 * math.pi**2
        res = trace_hs_error(problem, grid, np.zeros(grid.n_dofs), k_modes=10)
        # orthonormal coefficient of the solution is 1/2
        assert res.value == pytest.approx(lam ** (0.6 / 2) * 0.5, rel=1e-8)

    def test_interpolated_exact_trace_small_and_decreasing(self):
        problem = benchmark_problem(0.5, 1)
        vals = []
        for n in (16, 32, 64):
            grid = build_grid(1, n)
            vals.append(
                trace_hs_error(problem, grid, exact_nodal_trace(problem, grid), 12).value
            )
        assert vals[0] < 0.1
        assert vals[1] < vals[0] and vals[2] < vals[1]

    def test_remainder_estimate_shrinks_under_refinement(self):
        problem = benchmark_problem(0.5, 1)
        remainders = []
        for n in (16, 32, 64):
            _, grid, _, sol = solve_benchmark(0.5, 1, n)
            res = trace_hs_error(problem, grid, sol.trace, k_modes=12)
            assert res.remainder_estimate >= 0.0
            remainders.append(res.remainder_estimate)
        assert remainders[2] < remainders[0]

    def test_requires_mode_coverage(self):
        problem = benchmark_problem(0.5, 2)
        grid = build_grid(2, 8)
        with pytest.raises(ValueError):
            trace_hs_error(problem, grid, np.zeros(grid.n_dofs), k_modes=0)

    @pytest.mark.parametrize("scheme", ["hfem", "hpfem"])
    @pytest.mark.parametrize("s", [0.2, 0.5, 0.8])
    def test_bounded_by_energy_error(self, scheme, s):
        rows = run_convergence_study(scheme, s, 1, levels=4)
        for row in rows:
            assert row.trace_hs_error <= 1.5 * row.energy_error


class TestStudyDriver:
    def test_row_bookkeeping(self):
        rows = run_convergence_study("hpfem", 0.5, 1, levels=3)
        assert len(rows) == 3
        for row in rows:
            assert row.N_total == row.N_omega * row.N_Y
            assert row.solve_iterations >= 1
            assert row.wall_time > 0.0
            assert row.Y >= 1.0
        assert rows[0].h_omega == pytest.approx(1 / 8)
        assert rows[1].h_omega == pytest.approx(1 / 16)

    def test_explicit_n_list(self):
        rows = run_convergence_study("hfem", 0.4, 1, n_list=[10, 20])
        assert [r.h_omega for r in rows] == [pytest.approx(0.1), pytest.approx(0.05)]

    def test_observed_orders_on_synthetic_rows(self):
        def make_row(h, e):
            return StudyRow(
                h_omega=h, N_omega=1, M=1, N_Y=1, N_total=1, Y=1.0,
                energy_error=e, trace_hs_error=0.0, solve_iterations=1, wall_time=0.0,
            )

        rows = [make_row(0.1, 1.0), make_row(0.05, 0.5), make_row(0.025, 0.25)]
        assert observed_orders(rows) == pytest.approx([1.0, 1.0])
        rows = [make_row(0.1, 1.0), make_row(0.05, 0.25)]
        assert observed_orders(rows) == pytest.approx([2.0])

    def test_dof_gap(self):
        def make_row(n_total, e):
            return StudyRow(
                h_omega=0.1, N_omega=1, M=1, N_Y=1, N_total=n_total, Y=1.0,
                energy_error=e, trace_hs_error=0.0, solve_iterations=1, wall_time=0.0,
            )

        ref = [make_row(100, 0.5), make_row(1000, 0.1)]
        alt = [make_row(50, 0.4), make_row(80, 0.1), make_row(200, 0.05)]
        err, n_ref, n_alt = dof_gap(ref, alt)
        assert err == pytest.approx(0.1)
        assert n_ref == 1000
        assert n_alt == 80

    def test_energy_monotone_under_degree_elevation(self):
        # nested spaces: raising every degree cannot increase the error
        from fracdiff.meshing import YMesh

        problem = benchmark_problem(0.6, 1)
        grid = build_grid(1, 12)
        params = select_params_hp(grid.h_omega, 0.6, problem.domain.lambda1)
        mesh = build_ymesh(params)
        raised = YMesh(
            Y=mesh.Y, nodes=mesh.nodes,
            degrees=tuple(p + 1 for p in mesh.degrees),
            family="geometric", param=mesh.param,
        )
        errs = []
        for m in (mesh, raised):
            weighted = assemble_weighted_matrices(m, alpha=problem.alpha)
            system = build_system(assemble_omega_matrices(grid), weighted)
            rhs = cylinder_rhs(system, assemble_load(grid, problem))
            sol = solve(system, rhs, rel_tol=1e-12, preconditioner="tensor")
            errs.append(energy_error(problem, grid, sol.trace))
        assert errs[1] <= errs[0] * (1 + 1e-10)

    def test_run_level_rejects_unknown_scheme(self):
        problem = benchmark_problem(0.5, 1)
        with pytest.raises(ValueError):
            run_level(problem, "spectral", 8)

    def test_threaded_rows_match_sequential(self, monkeypatch):
        seq = run_convergence_study("hfem", 0.5, 1, levels=3)
        monkeypatch.setenv("FRACDIFF_THREADS", "3")
        par = run_convergence_study("hfem", 0.5, 1, levels=3)
        assert [r.energy_error for r in par] == pytest.approx(
            [r.energy_error for r in seq], rel=1e-12
        )
        assert [r.N_total for r in par] == [r.N_total for r in seq]
