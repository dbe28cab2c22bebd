"""
Unit tests for the spacetime harmonic solver.
"""
import dataclasses

import numpy as np
import pytest

from src.core.exceptions import NotConverged
from src.models.grid import Grid
from src.models.reports import ChargeReport
from src.models.specs import SliceSpec, SolverParams
from src.services.harmonic_service import DivergenceOperator, HarmonicService


@pytest.mark.unit
class TestDivergenceOperator:
    """Matrix-free operator."""

    def test_laplacian_of_quadratic_on_flat(self, flat_ids):
        op = DivergenceOperator(flat_ids.g, ~HarmonicService.dirichlet_mask(flat_ids))
        x = flat_ids.grid.coordinates()
        lap = op.laplacian(x[0] ** 2 + x[1] ** 2)
        inner = (slice(1, -1),) * 3
        np.testing.assert_allclose(lap[inner], 4.0, atol=1e-10)

    def test_operator_is_symmetric(self, graph_ids):
        unknown = ~HarmonicService.dirichlet_mask(graph_ids)
        op = DivergenceOperator(graph_ids.g, unknown)
        rng = np.random.default_rng(3)
        a = np.zeros(graph_ids.grid.shape)
        b = np.zeros(graph_ids.grid.shape)
        a[unknown] = rng.normal(size=np.count_nonzero(unknown))
        b[unknown] = rng.normal(size=np.count_nonzero(unknown))
        lhs = np.sum(op.apply(a)[unknown] * b[unknown])
        rhs = np.sum(a[unknown] * op.apply(b)[unknown])
        assert lhs == pytest.approx(rhs, rel=1e-10)


@pytest.mark.unit
class TestSolver:
    """Picard iteration."""

    def test_flat_solution_is_linear(self, flat_ids, flat_solution):
        x = flat_ids.grid.coordinates()
        assert flat_solution.converged
        assert flat_solution.iterations == 1
        assert len(flat_solution.history) == 1
        assert flat_solution.history[0].inner_iterations == 0
        np.testing.assert_allclose(flat_solution.u, x[0], atol=1e-12)
        assert flat_solution.min_grad_norm == pytest.approx(1.0)

    def test_graph_solution_matches_null_plane(self, geometry, oracle, graph_spec, graph_ids):
        sol = HarmonicService(geometry).solve_spacetime_harmonic(graph_ids, SolverParams())
        exact = oracle.graph_reference(graph_spec).harmonic_function(graph_ids.grid)
        assert sol.converged
        assert np.max(np.abs(sol.u - exact)) < 1e-2
        assert [r.iteration for r in sol.history] == list(range(1, len(sol.history) + 1))

    def test_dirichlet_mask_covers_faces_and_excision(self, oracle):
        ids = oracle.schwarzschild_slice(1.0, Grid.box(3, 4.0, 16))
        fixed = HarmonicService.dirichlet_mask(ids)
        assert fixed[0, 16, 16] and fixed[16, 16, 16]
        assert not fixed[16, 16, 8]

    def test_hkk_needs_converged_solution(self, geometry, flat_ids, flat_solution):
        charges = ChargeReport(
            radii=[1.0, 1.5], energies=[0.0, 0.0], momenta=[[0.0] * 3] * 2, energy=0.0,
            momentum=[0.0] * 3, residual=0.0, decay_rate=1.0, richardson_terms=1,
        )
        stalled = dataclasses.replace(flat_solution, converged=False)
        with pytest.raises(NotConverged):
            HarmonicService(geometry).hkk_report(flat_ids, stalled, charges)

    def test_hkk_on_flat_data(self, geometry, flat_ids, flat_solution):
        charges = ChargeReport(
            radii=[1.0, 1.5], energies=[0.0, 0.0], momenta=[[0.0] * 3] * 2, energy=0.0,
            momentum=[0.0] * 3, residual=0.0, decay_rate=1.0, richardson_terms=1,
        )
        report = HarmonicService(geometry).hkk_report(flat_ids, flat_solution, charges)
        assert report.rhs == pytest.approx(0.0, abs=1e-12)
        assert report.slack == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.slow
    def test_hkk_on_graph_slices_shrinks_under_refinement(self, geometry, oracle, graph_spec):
        # a graph slice of Minkowski space carries E = |P| = 0
        charges = ChargeReport(
            radii=[1.0, 1.5], energies=[0.0, 0.0], momenta=[[0.0] * 3] * 2, energy=0.0,
            momentum=[0.0] * 3, residual=0.0, decay_rate=1.0, richardson_terms=1,
        )
        solver = HarmonicService(geometry)
        worst = []
        for n in (12, 24):
            ids = oracle.build(graph_spec.with_grid(Grid.box(3, 3.0, n)))
            sol = solver.solve_spacetime_harmonic(ids, SolverParams())
            report = solver.hkk_report(ids, sol, charges)
            assert abs(report.lhs) + report.rhs < 0.04
            worst.append(float(np.max(np.abs(report.integrand[ids.interior_mask(3)]))))
        assert worst[1] < 0.5 * worst[0]

    @pytest.mark.slow
    def test_hkk_pieces_on_schwarzschild(self, geometry, oracle):
        # tr k = 0: eps_reg only floors the Hessian denominator
        spec = SliceSpec(
            kind="schwarzschild", mass=1.0, excision_radius=1.0, mask_radius=2.0, grid=Grid.box(3, 4.0, 16)
        )
        ids = oracle.build(spec)
        solver = HarmonicService(geometry)
        sol = solver.solve_spacetime_harmonic(ids, SolverParams(eps_reg=1e-3))
        charges = ChargeReport(
            radii=[2.5, 3.0], energies=[1.0, 1.0], momenta=[[0.0] * 3] * 2, energy=1.0,
            momentum=[0.0] * 3, residual=0.0, decay_rate=1.0, richardson_terms=1,
        )
        report = solver.hkk_report(ids, sol, charges)
        assert report.lhs == pytest.approx(1.0)
        assert report.j_term == 0.0
        assert report.hessian_term > 0.0
        assert report.rhs >= 0.0
        assert report.slack >= -0.05
