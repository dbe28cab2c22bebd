"""
Unit tests for the exact initial-data generators.
"""
import numpy as np
import pytest

from src.core.exceptions import HorizonTooClose, NotSpacelike
from src.models.grid import Grid
from src.models.scenario import PPWaveParams
from src.models.specs import Factor, FunctionSpec, PPWaveSpec, SliceSpec
from src.services.oracle_service import OracleService


@pytest.mark.unit
class TestGraphSlices:
    """Minkowski graph slices."""

    def test_flat_slice(self, flat_ids):
        np.testing.assert_array_equal(flat_ids.g.values[:, :, 2, 2, 2], np.eye(3))
        assert np.max(np.abs(flat_ids.k.values)) == 0.0

    def test_bump_at_origin(self, oracle, graph_spec):
        ref = oracle.graph_reference(graph_spec)
        centre = (12, 12, 12)
        # grad f vanishes at the top of the bump and ddf = -2c/w^2 delta
        np.testing.assert_allclose(ref.df[(slice(None),) + centre], 0.0, atol=1e-15)
        np.testing.assert_allclose(ref.k[(slice(None), slice(None)) + centre], -0.2 * np.eye(3), atol=1e-14)
        np.testing.assert_allclose(ref.g[(slice(None), slice(None)) + centre], np.eye(3), atol=1e-15)

    def test_metric_is_delta_minus_df_df(self, oracle, graph_spec):
        ref = oracle.graph_reference(graph_spec)
        x = graph_spec.grid.coordinates()
        bump = 0.1 * np.exp(-(x[0] ** 2 + x[1] ** 2 + x[2] ** 2))
        df0 = -2.0 * x[0] * bump
        np.testing.assert_allclose(ref.f, bump, atol=1e-15)
        np.testing.assert_allclose(ref.g[0, 0], 1.0 - df0 ** 2, atol=1e-14)

    def test_harmonic_function_restricts_null_linear_function(self, oracle, graph_spec):
        ref = oracle.graph_reference(graph_spec)
        u = ref.harmonic_function(graph_spec.grid)
        assert u[12, 12, 12] == pytest.approx(-0.1)

    def test_boost_enters_linearly(self, oracle):
        spec = SliceSpec(kind="boosted_graph", amplitude=0.0, boost=(0.6, 0.0, 0.0), grid=Grid.box(3, 2.0, 4))
        ids = oracle.build(spec)
        np.testing.assert_allclose(ids.g.values[0, 0], 1.0 - 0.36)
        assert np.max(np.abs(ids.k.values)) < 1e-14

    def test_steep_graph_is_not_spacelike(self, oracle):
        spec = SliceSpec(kind="boosted_graph", amplitude=0.5, boost=(0.9, 0.0, 0.0), grid=Grid.box(3, 3.0, 12))
        with pytest.raises(NotSpacelike):
            oracle.build(spec)

    def test_missing_grid(self, oracle):
        with pytest.raises(ValueError):
            oracle.build(SliceSpec(kind="graph", amplitude=0.1))


@pytest.mark.unit
class TestSchwarzschild:
    """Time-symmetric isotropic slice."""

    def test_conformal_factor_on_axis(self, oracle):
        ids = oracle.schwarzschild_slice(1.0, Grid.box(3, 4.0, 16))
        # node (24, 16, 16) sits at x = (2, 0, 0)
        assert ids.g.values[0, 0, 24, 16, 16] == pytest.approx(1.25 ** 4)
        assert ids.g.values[0, 1, 24, 16, 16] == 0.0
        assert ids.excision_radius == 1.0

    def test_excised_ball_is_frozen(self, oracle):
        ids = oracle.schwarzschild_slice(1.0, Grid.box(3, 4.0, 16), excision_radius=1.0)
        assert ids.g.values[0, 0, 16, 16, 16] == pytest.approx(1.5 ** 4)

    def test_flux_tends_to_mass(self):
        assert OracleService.schwarzschild_flux(2.0, 1e8) == pytest.approx(2.0, rel=1e-7)

    def test_excision_near_horizon(self, oracle):
        with pytest.raises(HorizonTooClose):
            oracle.schwarzschild_slice(1.0, Grid.box(3, 4.0, 16), excision_radius=0.6)

    def test_mass_must_be_positive(self, oracle):
        with pytest.raises(ValueError):
            oracle.schwarzschild_slice(0.0, Grid.box(3, 4.0, 16))


@pytest.mark.unit
class TestPPWaveMetric:
    """pp-wave metrics in (tau, u, x1, x2)."""

    @pytest.fixture
    def pp_grid(self):
        return PPWaveParams(half_width=1.0, resolution=8).build_grid()

    def test_default_wave_is_minkowski_in_null_coordinates(self, oracle, pp_grid):
        metric = oracle.pp_wave_metric(PPWaveSpec(), pp_grid)
        expected = np.zeros((4, 4))
        expected[0, 1] = expected[1, 0] = 1.0
        expected[1, 1] = expected[2, 2] = expected[3, 3] = 1.0
        node = tuple(n // 2 for n in pp_grid.shape)
        np.testing.assert_allclose(metric.values[(slice(None), slice(None)) + node], expected)

    def test_solved_form_components(self, oracle, pp_grid):
        spec = PPWaveSpec(
            psi=FunctionSpec.monomial(0.2, (0, 0, 0), Factor(kind="cos", omega=(1.0, 0.0, 0.0))),
            l=FunctionSpec.monomial(0.1, (0, 2, 0)),
        )
        metric = oracle.pp_wave_metric(spec, pp_grid)
        _, u, x1, x2 = pp_grid.coordinates()
        a = 0.2 * x2 * np.cos(u) + 0.2 * x1
        b = -0.2 * x1 * np.cos(u)
        np.testing.assert_allclose(metric.values[1, 2], a, atol=1e-14)
        np.testing.assert_allclose(metric.values[1, 3], b, atol=1e-14)
        np.testing.assert_allclose(metric.values[1, 1], 1.0 + a * a + b * b, atol=1e-14)

    def test_needs_four_dimensions(self, oracle):
        with pytest.raises(ValueError):
            oracle.pp_wave_metric(PPWaveSpec(), Grid.box(3, 1.0, 8))
