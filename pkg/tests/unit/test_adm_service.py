"""
Unit tests for ADM charges and Richardson extrapolation.
"""
import numpy as np
import pytest

from src.core.exceptions import SphereOutsideGrid
from src.models.grid import Grid
from src.models.specs import SliceSpec
from src.services.adm_service import AdmService, richardson_extrapolate
from src.services.geometry_service import GeometryService
from tests.conftest import quarter_turn


@pytest.mark.unit
class TestRichardson:
    """Extrapolation in inverse powers of r."""

    def test_exact_model_recovered(self):
        radii = np.array([2.0, 3.0, 4.0, 5.0])
        values = 2.0 + 3.0 / radii - 1.0 / radii ** 2
        limit, residual = richardson_extrapolate(radii, values, 1.0, 2)
        assert float(limit) == pytest.approx(2.0)
        assert float(residual) < 1e-12

    def test_vector_values(self):
        radii = np.array([2.0, 4.0])
        values = np.stack([1.0 + 1.0 / radii, -1.0 / radii], axis=1)
        limit, _ = richardson_extrapolate(radii, values, 1.0, 1)
        np.testing.assert_allclose(limit, [1.0, 0.0], atol=1e-12)


@pytest.mark.unit
class TestAdmCharges:
    """Coordinate-sphere fluxes."""

    def test_flat_data_has_no_charge(self, geometry, flat_ids):
        charges = AdmService(geometry).adm_charges(flat_ids, [1.0, 1.5])
        assert charges.energy == 0.0
        assert charges.momentum_norm == 0.0
        assert charges.radii == [1.0, 1.5]

    def test_sphere_outside_grid(self, geometry, flat_ids):
        with pytest.raises(SphereOutsideGrid):
            AdmService(geometry).adm_charges(flat_ids, [1.0, 2.9])

    def test_needs_two_radii(self, geometry, flat_ids):
        with pytest.raises(ValueError):
            AdmService(geometry).adm_charges(flat_ids, [1.0, 1.0])

    def test_sphere_must_avoid_excision(self, geometry, oracle):
        ids = oracle.schwarzschild_slice(1.0, Grid.box(3, 6.0, 24))
        with pytest.raises(SphereOutsideGrid):
            AdmService(geometry).adm_charges(ids, [1.5, 3.0])

    def test_momentum_turns_with_the_data(self, geometry, oracle):
        ids = oracle.build(
            SliceSpec(kind="boosted_graph", amplitude=0.1, width=1.0, boost=(0.3, 0.0, 0.2), grid=Grid.box(3, 3.0, 12))
        )
        service = AdmService(geometry)
        R = GeometryService.rotation_matrix(3, (0, 1))
        fluxes = service.sphere_fluxes(ids, [1.5, 2.0])
        turned = service.sphere_fluxes(quarter_turn(ids), [1.5, 2.0])
        for r in (1.5, 2.0):
            assert turned[r][0] == pytest.approx(fluxes[r][0], abs=1e-10)
            np.testing.assert_allclose(turned[r][1], R @ fluxes[r][1], atol=1e-10)
