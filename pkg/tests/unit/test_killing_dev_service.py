"""
Unit tests for Killing developments and the pp-wave identities.
"""
import dataclasses

import numpy as np
import pytest

from src.core.exceptions import GradientTooSmall, NonPositiveLapse
from src.models.scenario import PPWaveParams
from src.models.specs import Factor, FunctionSpec, PPWaveSpec
from src.services.geometry_service import GeometryService
from src.services.killing_dev_service import KillingDevelopmentService


@pytest.fixture
def killing(geometry, oracle):
    return KillingDevelopmentService(geometry, oracle)


@pytest.fixture(scope="module")
def pp_grid():
    """(tau, u, x1, x2) slab over [-1, 1]^3 with h = 0.125."""
    return PPWaveParams(half_width=1.0, resolution=8).build_grid()


@pytest.mark.unit
class TestKillingDevelopment:
    """Dataset path."""

    def test_development_metric_layout(self, flat_ids, flat_solution):
        metric = KillingDevelopmentService.development_metric(flat_ids, flat_solution.grad, 0.25)
        assert metric.values.shape == (4, 4, 5) + tuple(flat_ids.grid.shape)
        assert metric.signature == (-1, 1, 1, 1)
        np.testing.assert_allclose(metric.values[0, 0], 0.0)
        np.testing.assert_allclose(metric.values[0, 1], 1.0)

    def test_flat_development_is_flat(self, killing, flat_ids, flat_solution):
        dev = killing.build_killing_development(flat_ids, flat_solution)
        report = KillingDevelopmentService.report(dev)
        assert report.null_hessian < 1e-12
        assert report.max_riemann_norm < 1e-12
        assert report.scalar_curvature < 1e-12
        assert report.null_norm_residual < 1e-12
        assert report.slice_extrinsic_residual < 1e-12
        assert dev.normal.shape == (4,) + tuple(flat_ids.grid.shape)

    def test_vanishing_gradient(self, killing, flat_ids, flat_solution):
        stalled = dataclasses.replace(flat_solution, min_grad_norm=0.0)
        with pytest.raises(GradientTooSmall):
            killing.build_killing_development(flat_ids, stalled)


@pytest.mark.unit
class TestPPWaves:
    """pp-wave curvature against closed forms."""

    def test_flat_wave(self, killing, pp_grid):
        report = killing.pp_wave_ricci_check(PPWaveSpec(), pp_grid)
        assert report.ricci_u1 < 1e-10
        assert report.ricci_u2 < 1e-10
        assert report.ricci_uu < 1e-10
        assert report.off_list == []
        assert report.normal_vector < 1e-10
        assert report.normal_mu < 1e-10
        assert not report.solved_form

    def test_solved_form_wave(self, killing, pp_grid):
        spec = PPWaveSpec(
            psi=FunctionSpec.monomial(0.2, (0, 0, 0), Factor(kind="cos", omega=(1.0, 0.0, 0.0))),
            l=FunctionSpec.monomial(0.1, (0, 2, 0)),
        )
        report = killing.pp_wave_ricci_check(spec, pp_grid)
        assert report.solved_form
        assert report.normal_vector < 1e-10
        assert report.ricci_u1 < 5e-2
        assert report.ricci_u2 < 5e-2
        assert report.riemann_F is not None
        assert report.tangential_J is not None

    def test_closed_form_ricci_of_solved_form_is_transverse(self, pp_grid):
        spec = PPWaveSpec(
            psi=FunctionSpec.monomial(0.2, (0, 0, 0), Factor(kind="cos", omega=(1.0, 0.0, 0.0))),
            l=FunctionSpec.monomial(0.05, (0, 1, 1), Factor(kind="sin", omega=(1.0, 0.0, 0.0))),
        )
        fields = KillingDevelopmentService().oracle.pp_wave_fields(spec, pp_grid)
        ric_u1, ric_u2, _ = KillingDevelopmentService.closed_form_ricci(fields.a, fields.b, fields.lapse)
        np.testing.assert_allclose(ric_u1, 0.0, atol=1e-12)
        np.testing.assert_allclose(ric_u2, 0.0, atol=1e-12)

    def test_non_positive_lapse(self, killing, pp_grid):
        with pytest.raises(NonPositiveLapse):
            killing.pp_wave_ricci_check(PPWaveSpec(lapse=FunctionSpec.constant(-1.0)), pp_grid)

    @pytest.mark.slow
    def test_generic_wave_converges_at_second_order(self, oracle):
        # a = u x1 x2, b = u^2 x1, V = 1 + sin(x1)/4: no solved form
        spec = PPWaveSpec(
            a=FunctionSpec.monomial(1.0, (1, 1, 1)),
            b=FunctionSpec.monomial(1.0, (2, 1, 0)),
            lapse=FunctionSpec.constant(1.0)
            + FunctionSpec.monomial(0.25, (0, 0, 0), Factor(kind="sin", omega=(0.0, 1.0, 0.0))),
        )
        errors = []
        # boundary layers of 3 and 6 nodes cut out the same region |x| <= 0.625
        for resolution, layer in ((8, 3), (16, 6)):
            grid4 = PPWaveParams(half_width=1.0, resolution=resolution).build_grid()
            killing = KillingDevelopmentService(GeometryService(boundary_layer=layer), oracle)
            report = killing.pp_wave_ricci_check(spec, grid4)
            assert not report.solved_form
            assert report.off_list == []
            assert report.normal_vector < 1e-10
            errors.append(report.ricci_uu)
            h = grid4.spatial().h
            assert max(report.ricci_u1, report.ricci_u2, report.ricci_uu) < 10.0 * h ** 2 + 1e-12
            # Ric(N, .) is O(1) here, so J = -Ric(N, .) would miss by far more than 10 h^2
            assert report.normal_J < 10.0 * h ** 2
            assert report.normal_mu < 10.0 * h ** 2
        assert 1.7 <= np.log2(errors[0] / errors[1]) <= 2.3
