"""
Unit tests for the constraint service.
"""
import numpy as np
import pytest

from src.core.config import settings
from src.models.grid import Grid
from src.models.specs import SliceSpec
from src.services.geometry_service import GeometryService
from src.services.ids_service import ConstraintService
from tests.conftest import constant_ids, quarter_turn


@pytest.mark.unit
class TestConstraints:
    """Energy and momentum densities."""

    def test_flat_data_vacuum(self, geometry, flat_ids):
        service = ConstraintService(geometry)
        data = service.constraint_data(flat_ids)
        report = service.report(data, flat_ids.interior_mask(3))
        assert report.max_mu == 0.0
        assert report.max_J == 0.0
        assert report.dec_satisfied

    def test_constant_k_energy_density(self, geometry):
        # mu = 1/2 ((tr k)^2 - |k|^2) = 1/2 (0.09 - 0.03) for k = 0.1 delta
        ids = constant_ids(Grid.box(3, 2.0, 4), (0.1, 0.1, 0.1))
        service = ConstraintService(geometry)
        data = service.constraint_data(ids)
        mask = ids.interior_mask(3)
        np.testing.assert_allclose(data.mu[mask], 0.03, atol=1e-14)
        np.testing.assert_allclose(data.trace_k, 0.3, atol=1e-14)
        assert np.max(data.J_norm) == 0.0
        assert service.report(data, mask).min_dec_margin == pytest.approx(0.03)

    def test_dec_tolerance_scales_with_h2(self, geometry, flat_ids):
        data = ConstraintService(geometry).constraint_data(flat_ids)
        assert data.dec_tolerance == pytest.approx(settings.dec_tolerance_coefficient * flat_ids.grid.h ** 2)

    def test_time_symmetric_data_has_no_momentum(self, geometry, oracle):
        ids = oracle.schwarzschild_slice(1.0, Grid.box(3, 4.0, 16))
        data = ConstraintService(geometry).constraint_data(ids)
        assert np.max(np.abs(data.J.values)) == 0.0

    def test_graph_slice_constraints_small(self, geometry, graph_ids):
        service = ConstraintService(geometry)
        report = service.report(service.constraint_data(graph_ids), graph_ids.interior_mask(3))
        assert report.max_mu < 0.05
        assert report.max_J < 0.05

    def test_dec_margin_turns_with_the_data(self, geometry, oracle):
        ids = oracle.build(
            SliceSpec(kind="boosted_graph", amplitude=0.1, width=1.0, boost=(0.3, 0.0, 0.2), grid=Grid.box(3, 3.0, 12))
        )
        service = ConstraintService(geometry)
        data = service.constraint_data(ids)
        turned = service.constraint_data(quarter_turn(ids))
        np.testing.assert_allclose(turned.dec_margin, GeometryService.rotate_scalar(data.dec_margin), atol=1e-10)
        np.testing.assert_allclose(turned.mu, GeometryService.rotate_scalar(data.mu), atol=1e-10)
        mask = ids.interior_mask(3)
        assert service.report(turned, mask).min_dec_margin == pytest.approx(
            service.report(data, mask).min_dec_margin, abs=1e-10
        )
