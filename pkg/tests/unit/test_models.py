"""
Unit tests for the grid, field, spec and scenario models.
"""
import numpy as np
import pytest
from pydantic import ValidationError

from src.core.exceptions import NonFinite, SingularMetric, SymmetryViolation
from src.models.grid import Grid, MetricField, TensorField, as_matrix_stack, from_matrix_stack
from src.models.reports import ChargeReport
from src.models.scenario import ConvergenceRow, ConvergenceTable, PPWaveParams, ScenarioConfig, ThresholdSpec
from src.models.specs import Factor, FunctionSpec, PPWaveSpec, SliceSpec


@pytest.mark.unit
class TestGrid:
    """Grid construction and node geometry."""

    def test_box_layout(self):
        grid = Grid.box(3, 2.0, 8)
        assert grid.shape == (17, 17, 17)
        assert grid.h == pytest.approx(0.25)
        assert grid.extent == pytest.approx((2.0, 2.0, 2.0))
        assert grid.origin == (-2.0, -2.0, -2.0)

    def test_rejects_even_node_count(self):
        with pytest.raises(ValidationError):
            Grid(dim=3, spacing=(1.0, 1.0, 1.0), shape=(10, 9, 9), origin=(0.0, 0.0, 0.0))

    def test_rejects_too_few_nodes(self):
        with pytest.raises(ValidationError):
            Grid(dim=3, spacing=(1.0, 1.0, 1.0), shape=(7, 9, 9), origin=(0.0, 0.0, 0.0))

    def test_product_adds_thin_leading_axis(self):
        spatial = Grid.box(3, 2.0, 8)
        grid4 = Grid.product(spatial, 0.1, 5, centre=0.3)
        assert grid4.dim == 4
        assert grid4.shape == (5, 17, 17, 17)
        assert grid4.axes()[0] == pytest.approx([0.1, 0.2, 0.3, 0.4, 0.5])
        assert grid4.spatial().shape == spatial.shape
        assert grid4.spatial().spacing == spatial.spacing

    def test_product_rejects_even_nodes(self):
        with pytest.raises(ValueError):
            Grid.product(Grid.box(3, 2.0, 8), 0.1, 6)

    def test_centre_slice_mask(self):
        spatial = Grid.box(3, 2.0, 8)
        grid4 = Grid.product(spatial, 0.1)
        inner = spatial.interior_mask(3)
        mask = grid4.centre_slice_mask(inner)
        assert mask.shape == grid4.shape
        assert np.count_nonzero(mask) == np.count_nonzero(inner)
        assert np.array_equal(mask[2], inner)

    def test_interior_mask_excision(self):
        grid = Grid.box(3, 4.0, 8)
        mask = grid.interior_mask(1, excision_radius=1.0)
        assert not mask[8, 8, 8]
        assert not mask[0, 8, 8]
        assert mask[8, 8, 2]

    def test_mask_radius_is_fixed_under_refinement(self):
        for n in (8, 16):
            grid = Grid.box(3, 4.0, n)
            mask = grid.interior_mask(1, excision_radius=1.0, mask_radius=2.0)
            r = grid.radius()
            assert not np.any(mask & (r <= 2.0))
            assert np.all(mask[(r > 2.0) & (r < 3.0)])

    def test_partial_is_exact_on_quadratics(self):
        grid = Grid.box(3, 2.0, 8)
        x = grid.coordinates()[0]
        np.testing.assert_allclose(grid.partial(x ** 2, 0), 2.0 * x, atol=1e-12)


@pytest.mark.unit
class TestFields:
    """Tensor and metric field validation."""

    def test_symmetry_violation(self):
        grid = Grid.box(3, 2.0, 4)
        values = np.zeros((3, 3) + grid.shape)
        values[0, 1] = 1.0
        with pytest.raises(SymmetryViolation):
            TensorField.symmetric2(grid, values)

    def test_non_finite_rejected(self):
        grid = Grid.box(3, 2.0, 4)
        values = np.zeros((3,) + grid.shape)
        values[0, 0, 0, 0] = np.nan
        with pytest.raises(NonFinite):
            TensorField.covector(grid, values)

    def test_singular_metric(self):
        grid = Grid.box(3, 2.0, 4)
        with pytest.raises(SingularMetric):
            MetricField.from_values(grid, np.zeros((3, 3) + grid.shape))

    def test_indefinite_riemannian_metric(self):
        grid = Grid.box(3, 2.0, 4)
        values = np.zeros((3, 3) + grid.shape)
        values[0, 0], values[1, 1], values[2, 2] = -1.0, 1.0, 1.0
        with pytest.raises(SingularMetric):
            MetricField.from_values(grid, values)

    def test_lorentzian_inverse(self):
        grid = Grid.box(4, 2.0, 4)
        values = np.zeros((4, 4) + grid.shape)
        for i, s in enumerate((-1.0, 1.0, 1.0, 1.0)):
            values[i, i] = s
        metric = MetricField.from_values(grid, values, (-1, 1, 1, 1))
        assert not metric.is_riemannian
        np.testing.assert_allclose(metric.inverse, values)
        # H = g^-1 + 2 N N is the Euclidean raiser for the Minkowski metric
        np.testing.assert_allclose(metric.norm_raiser[:, :, 0, 0, 0, 0], np.eye(4))

    def test_inverse_of_varying_metric(self):
        grid = Grid.box(3, 2.0, 4)
        x = grid.coordinates()
        values = np.einsum("ij,...->ij...", np.eye(3), 2.0 + np.sin(x[0]))
        values[0, 1] = values[1, 0] = 0.3 * np.cos(x[2])
        metric = MetricField.from_values(grid, values)
        product = np.einsum("ij...,jk...->ik...", metric.values, metric.inverse)
        np.testing.assert_allclose(product, np.einsum("ij,...->ij...", np.eye(3), np.ones(grid.shape)), atol=1e-13)
        assert np.array_equal(metric.inverse, np.swapaxes(metric.inverse, 0, 1))

    def test_matrix_stack_layout(self):
        values = np.arange(2 * 2 * 3 * 5, dtype=float).reshape(2, 2, 3, 5)
        stack = as_matrix_stack(values)
        assert stack.shape == (3, 5, 2, 2)
        assert stack[1, 4, 0, 1] == values[0, 1, 1, 4]
        assert np.array_equal(from_matrix_stack(stack), values)


@pytest.mark.unit
class TestSpecs:
    """Slice and pp-wave specifications."""

    def test_superluminal_boost_rejected(self):
        with pytest.raises(ValidationError):
            SliceSpec(kind="boosted_graph", boost=(0.8, 0.7, 0.0))

    def test_function_derivatives_stay_exact(self):
        f = FunctionSpec.monomial(3.0, (2, 1, 0))
        u, x1, x2 = np.array([2.0]), np.array([0.5]), np.array([1.0])
        assert f.evaluate(u, x1, x2)[0] == pytest.approx(6.0)
        assert f.derivative(0).evaluate(u, x1, x2)[0] == pytest.approx(6.0)
        assert f.derivative(0, 0, 1).evaluate(u, x1, x2)[0] == pytest.approx(6.0)
        assert f.derivative(2).terms == []

    def test_trig_derivative(self):
        f = FunctionSpec.monomial(1.0, (0, 0, 0), Factor(kind="sin", omega=(2.0, 0.0, 0.0)))
        u = np.array([0.3])
        zero = np.zeros(1)
        assert f.derivative(0).evaluate(u, zero, zero)[0] == pytest.approx(2.0 * np.cos(0.6))

    def test_pp_wave_forms_exclusive(self):
        with pytest.raises(ValidationError):
            PPWaveSpec(a=FunctionSpec.constant(1.0), psi=FunctionSpec.constant(1.0))

    def test_psi_must_depend_on_u_only(self):
        with pytest.raises(ValidationError):
            PPWaveSpec(psi=FunctionSpec.monomial(1.0, (0, 1, 0)))

    def test_solved_form_resolution(self):
        spec = PPWaveSpec(psi=FunctionSpec.constant(2.0), l=FunctionSpec.monomial(0.5, (0, 2, 0)))
        a, b = spec.resolved()
        u, x1, x2 = np.array([0.0]), np.array([1.0]), np.array([3.0])
        # a = x2 psi + l_x1, b = -x1 psi + l_x2
        assert a.evaluate(u, x1, x2)[0] == pytest.approx(3.0 * 2.0 + 1.0)
        assert b.evaluate(u, x1, x2)[0] == pytest.approx(-2.0)


@pytest.mark.unit
class TestScenarioModels:
    """Scenario validation, thresholds and convergence tables."""

    def test_rigidity_requires_harmonic(self):
        with pytest.raises(ValidationError):
            ScenarioConfig(slice=SliceSpec(kind="flat"), checks=["constraints", "rigidity"])

    def test_dataset_source_required(self):
        with pytest.raises(ValidationError):
            ScenarioConfig(checks=["constraints"])

    def test_ppwave_only_needs_no_dataset(self):
        config = ScenarioConfig(checks=["ppwave"], ppwave=PPWaveParams())
        assert config.ordered_checks() == ["ppwave"]

    def test_checks_run_in_dependency_order(self):
        config = ScenarioConfig(slice=SliceSpec(kind="flat"), checks=["rigidity", "constraints", "harmonic"])
        assert config.ordered_checks() == ["constraints", "harmonic", "rigidity"]

    def test_at_level_refines_both_grids(self):
        config = ScenarioConfig(
            slice=SliceSpec(kind="flat"), checks=["constraints", "ppwave"], ppwave=PPWaveParams(resolution=12)
        )
        refined = config.at_level(48)
        assert refined.grid.resolution == 48
        assert refined.ppwave.resolution == 24
        assert config.grid.resolution == 24

    def test_threshold_h2_scaling(self):
        spec = ThresholdSpec(upper=20.0, scale="h2")
        assert spec.passes(0.15, 0.1)
        assert not spec.passes(0.25, 0.1)
        assert not spec.passes(None, 0.1)

    def test_threshold_band(self):
        spec = ThresholdSpec(lower=0.9, upper=1.1)
        assert spec.passes(1.0, 0.5)
        assert not spec.passes(0.8, 0.5)

    def test_pp_wave_grid(self):
        grid = PPWaveParams(half_width=1.0, resolution=6).build_grid()
        assert grid.shape == (5, 13, 13, 13)
        assert grid.spacing[0] == pytest.approx(grid.spacing[1])

    def test_convergence_table_frame(self):
        table = ConvergenceTable(scenario="demo")
        table.rows.append(
            ConvergenceRow(
                diagnostic="max_mu",
                resolutions=[24, 32, 48],
                spacings=[0.25, 0.1875, 0.125],
                values=[1e-2, 5.6e-3, 2.5e-3],
                orders=[2.0, 2.0],
                verdict="pass_order",
            )
        )
        assert table.row("max_mu").verdict == "pass_order"
        frame = table.to_frame()
        assert list(frame["resolution"]) == [24, 32, 48]
        assert frame["order"].isna().iloc[0]
        assert frame["order"].iloc[2] == pytest.approx(2.0)


@pytest.mark.unit
class TestChargeReport:
    """Charge report consistency."""

    def test_momentum_norm_computed(self):
        report = ChargeReport(
            radii=[1.0, 2.0],
            energies=[1.0, 1.0],
            momenta=[[0.0, 0.0, 0.0], [0.0, 0.0, 0.0]],
            energy=1.0,
            momentum=[3.0, 4.0, 0.0],
            residual=0.0,
            decay_rate=1.0,
            richardson_terms=1,
        )
        assert report.momentum_norm == pytest.approx(5.0)

    def test_radii_must_increase(self):
        with pytest.raises(ValidationError):
            ChargeReport(
                radii=[2.0, 1.0],
                energies=[1.0, 1.0],
                momenta=[[0.0] * 3, [0.0] * 3],
                energy=1.0,
                momentum=[0.0] * 3,
                residual=0.0,
                decay_rate=1.0,
                richardson_terms=1,
            )
