import numpy as np
import pytest

from fracdiff.fem1d import assemble_weighted_matrices
from fracdiff.femomega import assemble_load, assemble_omega_matrices, build_grid
from fracdiff.meshing import build_ymesh, graded_mesh, hp_mesh, select_params_h
from fracdiff.solver import (
    SolverError,
    build_system,
    cylinder_rhs,
    extract_trace,
    kron_matvec,
    solve,
)
from fracdiff.spectral import benchmark_problem


def make_system(d=1, n=8, mesh=None, alpha=0.0):
    if mesh is None:
        mesh = graded_mesh(6, 0.5, 1.5)
    omega = assemble_omega_matrices(build_grid(d, n))
    weighted = assemble_weighted_matrices(mesh, alpha=alpha)
    return build_system(omega, weighted)


def dense_operator(system):
    # oracle: explicit Kronecker form
    return np.kron(
        system.y.B_mass.toarray(), system.omega.A_stiff.toarray()
    ) + np.kron(system.y.B_stiff.toarray(), system.omega.A_mass.toarray())


class TestKronMatvec:
    def test_zero_vector(self):
        system = make_system()
        assert np.all(kron_matvec(system, np.zeros(system.n_total)) == 0.0)

    def test_unit_vectors_match_dense_oracle(self):
        system = make_system(d=1, n=3, mesh=graded_mesh(2, 1.0, 1.0))
        dense = dense_operator(system)
        for j in range(system.n_total):
            e = np.zeros(system.n_total)
            e[j] = 1.0
            got = kron_matvec(system, e)
            assert np.max(np.abs(got - dense[:, j])) <= 1e-14 * np.abs(dense).max()

    @pytest.mark.parametrize(
        "d,n,mesh,alpha",
        [
            (1, 12, graded_mesh(8, 0.4, 1.5), 0.2),
            (1, 9, hp_mesh(4, 0.125, 2.0, 0.7), -0.6),
            (2, 4, hp_mesh(3, 0.125, 1.0, 0.7), 0.6),
        ],
    )
    def test_random_vectors_match_dense_oracle(self, d, n, mesh, alpha):
        system = make_system(d=d, n=n, mesh=mesh, alpha=alpha)
        assert system.n_total <= 1000
        dense = dense_operator(system)
        rng = np.random.default_rng(5)
        for _ in range(5):
            x = rng.standard_normal(system.n_total)
            got = kron_matvec(system, x)
            want = dense @ x
            assert np.max(np.abs(got - want)) <= 1e-13 * np.abs(want).max()

    def test_symmetry(self):
        system = make_system(d=2, n=5, mesh=hp_mesh(3, 0.2, 1.0, 0.8), alpha=-0.4)
        rng = np.random.default_rng(17)
        for _ in range(5):
            x = rng.standard_normal(system.n_total)
            y = rng.standard_normal(system.n_total)
            a = float(kron_matvec(system, x) @ y)
            b = float(x @ kron_matvec(system, y))
            assert abs(a - b) <= 1e-12 * abs(a)

    def test_tensor_and_flat_agree(self):
        system = make_system()
        rng = np.random.default_rng(2)
        X = rng.standard_normal((system.n_omega, system.n_y))
        flat = kron_matvec(system, X.reshape(-1, order="F"))
        assert np.allclose(flat.reshape(X.shape, order="F"), kron_matvec(system, X))

    def test_dimension_mismatch(self):
        system = make_system()
        with pytest.raises(ValueError):
            kron_matvec(system, np.zeros(system.n_total + 1))

    def test_positive_definite(self):
        system = make_system(d=1, n=10, mesh=graded_mesh(7, 0.3, 1.2), alpha=0.5)
        rng = np.random.default_rng(23)
        for _ in range(100):
            x = rng.standard_normal(system.n_total)
            assert float(x @ kron_matvec(system, x)) > 0.0


class TestSolve:
    @pytest.mark.parametrize("preconditioner", ["jacobi", "tensor"])
    def test_manufactured_solution(self, preconditioner):
        system = make_system(d=1, n=14, mesh=graded_mesh(9, 0.35, 1.8), alpha=-0.2)
        rng = np.random.default_rng(7)
        w = rng.standard_normal((system.n_omega, system.n_y))
        rhs = kron_matvec(system, w)
        sol = solve(system, rhs, rel_tol=1e-10, preconditioner=preconditioner)
        rel = np.linalg.norm(sol.coefficients - w) / np.linalg.norm(w)
        assert rel < 1e-8

    def test_zero_rhs(self):
        system = make_system()
        sol = solve(system, np.zeros((system.n_omega, system.n_y)))
        assert sol.iterations == 0
        assert np.all(sol.coefficients == 0.0)

    def test_dense_factorization_oracle(self):
        # unweighted half-order case against a direct dense solve
        problem = benchmark_problem(0.5, 1)
        grid = build_grid(1, 12)
        params = select_params_h(grid.h_omega, 0.5, problem.domain.lambda1)
        mesh = build_ymesh(params)
        system = make_system(d=1, n=12, mesh=mesh, alpha=0.0)
        assert system.n_total <= 400
        load = assemble_load(grid, problem)
        rhs = cylinder_rhs(system, load)
        sol = solve(system, rhs, rel_tol=1e-12)
        dense = dense_operator(system)
        want = np.linalg.solve(dense, rhs.reshape(-1, order="F"))
        got = sol.coefficients.reshape(-1, order="F")
        assert np.linalg.norm(got - want) / np.linalg.norm(want) < 1e-8

    def test_residual_contract_after_solve(self):
        system = make_system(d=1, n=16, mesh=graded_mesh(10, 0.24, 2.1), alpha=0.6)
        rng = np.random.default_rng(3)
        rhs = rng.standard_normal((system.n_omega, system.n_y))
        tol = 1e-10
        sol = solve(system, rhs, rel_tol=tol)
        res = kron_matvec(system, sol.coefficients) - rhs
        assert np.linalg.norm(res) / np.linalg.norm(rhs) <= tol

    def test_nonconvergence_reports_residual(self):
        system = make_system(d=1, n=10, mesh=graded_mesh(6, 0.3, 1.5), alpha=0.4)
        rng = np.random.default_rng(9)
        rhs = rng.standard_normal((system.n_omega, system.n_y))
        with pytest.raises(SolverError) as err:
            solve(system, rhs, rel_tol=1e-10, max_iter=2)
        assert err.value.residual > 0.0
        assert err.value.iterations == 2

    def test_tensor_matches_jacobi(self):
        system = make_system(d=2, n=6, mesh=hp_mesh(4, 0.125, 1.5, 0.7), alpha=-0.6)
        rng = np.random.default_rng(31)
        rhs = rng.standard_normal((system.n_omega, system.n_y))
        a = solve(system, rhs, rel_tol=1e-12, preconditioner="jacobi")
        b = solve(system, rhs, rel_tol=1e-12, preconditioner="tensor")
        rel = np.linalg.norm(a.coefficients - b.coefficients) / np.linalg.norm(a.coefficients)
        assert rel < 1e-9

    def test_tensor_iterations_stay_small_on_hard_mesh(self):
        # severe grading: the shifted-solve preconditioner keeps conditioning
        # bounded where pure diagonal scaling degrades
        mesh = graded_mesh(64, 0.16, 2.5)
        system = make_system(d=1, n=64, mesh=mesh, alpha=0.6)
        rng = np.random.default_rng(13)
        rhs = rng.standard_normal((system.n_omega, system.n_y))
        sol = solve(system, rhs, rel_tol=1e-10, preconditioner="tensor")
        assert sol.iterations <= 25

    def test_invalid_preconditioner(self):
        system = make_system()
        with pytest.raises(ValueError):
            solve(system, np.zeros((system.n_omega, system.n_y)), preconditioner="air")


class TestTrace:
    def test_zero_solution(self):
        system = make_system()
        sol = solve(system, np.zeros((system.n_omega, system.n_y)))
        assert np.all(extract_trace(sol) == 0.0)

    def test_trace_reads_bottom_slice(self):
        system = make_system()
        coeffs = np.zeros((system.n_omega, system.n_y))
        coeffs[:, 0] = np.arange(system.n_omega, dtype=float)
        from fracdiff.solver import SolutionTensor

        sol = SolutionTensor(coefficients=coeffs, iterations=0, residual=0.0)
        assert np.allclose(extract_trace(sol), np.arange(system.n_omega))

    def test_benchmark_trace_peak_near_one(self):
        problem = benchmark_problem(0.5, 2)
        grid = build_grid(2, 16)
        params = select_params_h(grid.h_omega, 0.5, problem.domain.lambda1)
        mesh = build_ymesh(params)
        omega = assemble_omega_matrices(grid)
        weighted = assemble_weighted_matrices(mesh, alpha=problem.alpha)
        system = build_system(omega, weighted)
        rhs = cylinder_rhs(system, assemble_load(grid, problem))
        sol = solve(system, rhs, rel_tol=1e-10, preconditioner="tensor")
        trace = extract_trace(sol).reshape(grid.n - 1, grid.n - 1)
        mid = (grid.n - 1) // 2
        # peak of sin(pi x)sin(pi y) sampled near the center
        assert abs(trace[mid, mid] - 1.0) < 0.05

    def test_cylinder_rhs_shape(self):
        system = make_system()
        load = np.ones(system.n_omega)
        rhs = cylinder_rhs(system, load)
        assert rhs.shape == (system.n_omega, system.n_y)
        assert np.all(rhs[:, 1:] == 0.0)
        with pytest.raises(ValueError):
            cylinder_rhs(system, np.ones(system.n_omega + 1))
