"""
Unit tests for the Gaussian development.
"""
import numpy as np
import pytest

from src.core.exceptions import SliceDegenerates, StepTooLarge
from src.models.grid import Grid
from src.services.gaussian_dev_service import GaussianDevelopmentService, closed_form_slice, rk4_step
from tests.conftest import constant_ids


@pytest.fixture
def development(geometry):
    return GaussianDevelopmentService(geometry)


@pytest.mark.unit
class TestIntegrator:
    """Pointwise ODE pieces."""

    def test_window_centres(self):
        assert GaussianDevelopmentService.window_centres(32) == [-30, -16, 0, 16, 30]
        assert GaussianDevelopmentService.window_centres(8) == [-6, -4, 0, 4, 6]

    def test_closed_form_slice(self):
        g = np.eye(3)[None]
        k = np.diag([1.0, 0.5, 0.0])[None]
        np.testing.assert_allclose(closed_form_slice(g, k, 0.2)[0], np.diag([1.44, 1.21, 1.0]))

    def test_rk4_step_follows_closed_form(self):
        g = np.eye(3)[None]
        k = np.diag([0.3, -0.2, 0.1])[None]
        state = (g, k, np.linalg.solve(g, k))
        for _ in range(10):
            state = rk4_step(state, 0.01)
        np.testing.assert_allclose(state[0], closed_form_slice(g, k, 0.1), atol=1e-10)

    def test_degenerate_slice_detected(self):
        g = np.zeros((2, 3, 3))
        with pytest.raises(SliceDegenerates):
            GaussianDevelopmentService._check_slice(g, 0.1, np.ones(2, dtype=bool))


@pytest.mark.unit
class TestDevelopment:
    """Full development and its diagnostics."""

    def test_flat_data_develop_to_minkowski(self, development, flat_ids):
        result = development.evolve_gaussian_development(flat_ids, eps=0.1, steps=8)
        assert result.flatness == 0.0
        assert len(result.window_flatness) == 5
        assert result.time_symmetry_residual == 0.0
        assert result.integration_error == 0.0
        assert result.restriction_residual == pytest.approx(0.0, abs=1e-12)
        assert result.initial_slice_residual == 0.0
        assert result.times[0] == pytest.approx(-0.1)
        assert len(result.times) == 17

    def test_integration_error_is_fourth_order(self, development, small_grid):
        ids = constant_ids(small_grid, (1.0, 0.5, 0.25))
        coarse = development.evolve_gaussian_development(ids, eps=0.2, steps=8)
        fine = development.evolve_gaussian_development(ids, eps=0.2, steps=16)
        assert coarse.time_symmetry_residual is None
        assert 8.0 < coarse.integration_error / fine.integration_error < 32.0

    def test_constant_k_on_flat_slice_is_curved(self, development, small_grid):
        # k_ii k_jj != 0 on a flat slice violates the Gauss equation
        ids = constant_ids(small_grid, (1.0, 0.5, 0.25))
        result = development.evolve_gaussian_development(ids, eps=0.2, steps=8)
        assert result.flatness > 0.1
        assert result.restriction_residual < 1e-6
        report = GaussianDevelopmentService.report(result, eps=0.2, steps=8)
        assert report.max_dg_dt == pytest.approx(2.0 * (1.0 + 0.2), rel=1e-6)
        assert set(report.window_flatness) == {"-0.1500", "-0.1000", "+0.0000", "+0.1000", "+0.1500"}

    def test_focusing_slice_degenerates(self, development, small_grid):
        ids = constant_ids(small_grid, (5.0, 0.0, 0.0))
        with pytest.raises((StepTooLarge, SliceDegenerates)):
            development.evolve_gaussian_development(ids, eps=0.3, steps=30)

    def test_rejects_bad_parameters(self, development, flat_ids):
        with pytest.raises(ValueError):
            development.evolve_gaussian_development(flat_ids, eps=0.0)
        with pytest.raises(ValueError):
            development.evolve_gaussian_development(flat_ids, eps=0.1, steps=4)

    @pytest.mark.slow
    def test_graph_slice_develops_into_flat_space(self, development, oracle, graph_spec):
        flatness = []
        for n in (12, 24):
            ids = oracle.build(graph_spec.with_grid(Grid.box(3, 3.0, n)))
            result = development.evolve_gaussian_development(ids, eps=0.1, steps=8)
            assert result.flatness < 20.0 * ids.grid.h ** 2
            assert result.restriction_residual < 20.0 * ids.grid.h ** 2
            flatness.append(result.flatness)
        assert flatness[1] < 0.5 * flatness[0]

    def test_graph_step_halving_is_fourth_order(self, development, graph_ids):
        # doubling the steps cuts the RK4 error sixteen fold
        coarse = development.evolve_gaussian_development(graph_ids, eps=0.5, steps=8)
        fine = development.evolve_gaussian_development(graph_ids, eps=0.5, steps=16)
        assert fine.integration_error < coarse.integration_error
        assert 8.0 < coarse.integration_error / fine.integration_error < 32.0
