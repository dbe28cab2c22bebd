"""Constraint maps of an initial data set.

mu = 1/2 (R + (tr k)^2 - |k|^2) and J = div(k - (tr k) g), plus the dominant
energy condition margin mu - |J|.
"""
import logging
from typing import Optional

import numpy as np

from src.core.config import settings
from src.models.data import ConstraintData, CurvatureSuite, InitialDataSet
from src.models.grid import TensorField
from src.models.reports import ConstraintReport
from src.services.geometry_service import GeometryService, masked_max

logger = logging.getLogger(__name__)


class ConstraintService:
    """Energy/momentum densities and the DEC verdict."""

    def __init__(self, geometry: Optional[GeometryService] = None):
        self.geometry = geometry or GeometryService()

    def constraint_data(self, ids: InitialDataSet, curvature: Optional[CurvatureSuite] = None) -> ConstraintData:
        """Compute mu, J, tr k and the DEC margin.

        Args:
            ids: Initial data set.
            curvature: Curvature of ``ids.g`` if already available.

        Returns:
            ConstraintData; ``dec_satisfied`` is set when the interior minimum of
            the margin exceeds ``-C h^2`` (C = dec_tolerance_coefficient).
        """
        g = ids.g
        mask = ids.interior_mask(self.geometry.boundary_layer)
        curvature = curvature or self.geometry.curvature_suite(g, mask=mask, keep_riemann=False)
        ginv = g.inverse
        k = ids.k.values
        trace_k = np.einsum("ij...,ij...->...", ginv, k)
        k_up = np.einsum("ia...,jb...,ab...->ij...", ginv, ginv, k)
        k_sq = np.einsum("ij...,ij...->...", k_up, k)
        mu = 0.5 * (curvature.scalar + trace_k ** 2 - k_sq)

        momentum = TensorField.symmetric2(ids.grid, k - trace_k * g.values)
        J = self.geometry.covariant_div(momentum, g)
        J_norm = np.sqrt(np.maximum(np.einsum("ij...,i...,j...->...", ginv, J.values, J.values), 0.0))
        margin = mu - J_norm

        h = ids.grid.h
        tol = settings.dec_tolerance_coefficient * h * h
        min_margin = float(np.min(margin[mask]))
        satisfied = min_margin > -tol
        logger.info(
            f"Constraints for {ids.provenance}: max|mu|={masked_max(np.abs(mu), mask):.3e}, "
            f"max|J|={masked_max(J_norm, mask):.3e}, DEC {'holds' if satisfied else 'fails'}"
        )
        return ConstraintData(
            mu=mu,
            J=J,
            J_norm=J_norm,
            dec_margin=margin,
            trace_k=trace_k,
            dec_satisfied=satisfied,
            dec_tolerance=tol,
        )

    @staticmethod
    def report(data: ConstraintData, mask: np.ndarray) -> ConstraintReport:
        return ConstraintReport(
            max_mu=masked_max(np.abs(data.mu), mask),
            max_J=masked_max(data.J_norm, mask),
            min_dec_margin=float(np.min(data.dec_margin[mask])),
            dec_tolerance=data.dec_tolerance,
            dec_satisfied=data.dec_satisfied,
        )
