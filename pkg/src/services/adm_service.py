"""ADM energy and linear momentum from coordinate-sphere flux integrals.

E(r) = 1/(16 pi) oint sum_i (g_ij,i - g_ii,j) nu^j dA
P_i(r) = 1/(8 pi) oint (k_ij - (tr k) g_ij) nu^j dA

Field values at the quadrature nodes come from tricubic interpolation of
grid-differentiated fields; the finite-radius values are extrapolated to
r -> infinity with a Richardson power series in r^{-tau}.
"""
import logging
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from src.core.concurrency import ordered_map
from src.core.config import settings
from src.core.exceptions import ExtrapolationUnstable, SphereOutsideGrid
from src.models.data import InitialDataSet
from src.models.reports import ChargeReport
from src.services.geometry_service import GeometryService

logger = logging.getLogger(__name__)


def richardson_extrapolate(radii: np.ndarray, values: np.ndarray, q: float, terms: int) -> Tuple[np.ndarray, np.ndarray]:
    """Fit values(r) = V + sum_{n=1..terms} c_n r^{-n q} by least squares.

    Args:
        radii: Sphere radii, shape ``(n,)``.
        values: Samples, shape ``(n,)`` or ``(n, m)``.
        q: Decay exponent.
        terms: Number of correction terms (``< n``).

    Returns:
        (limit, residual). When the fit is exactly determined the residual is the
        difference to the extrapolant with one term fewer; otherwise it is the
        max absolute fit deviation.
    """
    values = np.asarray(values, dtype=float)
    columns = [np.ones_like(radii)] + [radii ** (-n * q) for n in range(1, terms + 1)]
    design = np.stack(columns, axis=1)
    coeffs = np.linalg.lstsq(design, values, rcond=None)[0]
    limit = coeffs[0]
    if len(radii) > terms + 1:
        residual = np.max(np.abs(design @ coeffs - values), axis=0)
    else:
        lower = np.linalg.lstsq(design[:, :terms], values, rcond=None)[0][0]
        residual = np.abs(limit - lower)
    return np.asarray(limit), np.asarray(residual)


class AdmService:
    """Coordinate-sphere charge integrals.

    Attributes:
        richardson_terms: Maximum number of r^{-n tau} corrections.
        n_theta, n_phi: Quadrature degree.
    """

    def __init__(self, geometry: Optional[GeometryService] = None, richardson_terms: int = 2,
                 n_theta: Optional[int] = None, n_phi: Optional[int] = None):
        self.geometry = geometry or GeometryService()
        self.richardson_terms = richardson_terms
        self.n_theta = n_theta or settings.quadrature_theta
        self.n_phi = n_phi or settings.quadrature_phi

    def _check_radius(self, ids: InitialDataSet, r: float) -> None:
        if not self.geometry.check_sphere(ids.grid, r):
            raise SphereOutsideGrid(f"Sphere r = {r} plus a 3h margin leaves the box (extent {ids.grid.extent})")
        if ids.excision_radius is not None and r - 3.0 * ids.grid.h <= ids.excision_radius:
            raise SphereOutsideGrid(f"Sphere r = {r} reaches the excised ball r <= {ids.excision_radius}")

    def sphere_fluxes(self, ids: InitialDataSet, radii: Sequence[float]) -> Dict[float, Tuple[float, np.ndarray]]:
        """E(r) and P(r) per radius, evaluated independently."""
        grid = ids.grid
        dg = grid.gradient(ids.g.values)  # dg[l, i, j] = d_l g_ij
        energy_vector = np.einsum("iij...->j...", dg) - np.einsum("jii...->j...", dg)
        trace_k = np.einsum("ij...,ij...->...", ids.g.inverse, ids.k.values)
        momentum_tensor = ids.k.values - trace_k * ids.g.values

        def flux(r: float) -> Tuple[float, np.ndarray]:
            quad = self.geometry.sphere_quadrature(r, self.n_theta, self.n_phi)
            points = quad.points
            area = quad.weights * r * r
            ev = self.geometry.interpolate(energy_vector, grid, points)
            mt = self.geometry.interpolate(momentum_tensor, grid, points)
            e = float(np.sum(area * np.einsum("jn,jn->n", ev, quad.normals))) / (16.0 * np.pi)
            p = np.einsum("ijn,jn,n->i", mt, quad.normals, area) / (8.0 * np.pi)
            return e, p

        results = ordered_map(flux, list(radii))
        return dict(zip(radii, results))

    def adm_charges(self, ids: InitialDataSet, radii: Sequence[float]) -> ChargeReport:
        """ADM energy and momentum with Richardson extrapolation in r.

        Args:
            ids: Initial data set.
            radii: At least two sphere radii (order irrelevant).

        Returns:
            ChargeReport with the raw E(r), P(r) and the extrapolated values.

        Raises:
            SphereOutsideGrid: A sphere does not fit inside the grid interior.
            ExtrapolationUnstable: Fit residual exceeds 25% of |E(r_max) - E(r_min)|
                and the absolute floor.
        """
        radii = sorted(float(r) for r in set(radii))
        if len(radii) < 2:
            raise ValueError("adm_charges needs at least two distinct radii")
        for r in radii:
            self._check_radius(ids, r)
        fluxes = self.sphere_fluxes(ids, radii)
        energies = np.array([fluxes[r][0] for r in radii])
        momenta = np.stack([fluxes[r][1] for r in radii])

        r_arr = np.array(radii)
        terms = min(self.richardson_terms, len(radii) - 1)
        energy, e_res = richardson_extrapolate(r_arr, energies, ids.tau, terms)
        momentum, p_res = richardson_extrapolate(r_arr, momenta, ids.tau, terms)
        residual = float(max(float(e_res), float(np.max(p_res))))

        spread = abs(energies[-1] - energies[0])
        if residual > 0.25 * spread and residual > settings.adm_residual_floor:
            logger.error(f"Richardson residual {residual:.3e} vs E(r) spread {spread:.3e}")
            raise ExtrapolationUnstable(
                f"Extrapolation residual {residual:.3e} exceeds 25% of |E(r_max) - E(r_min)| = {spread:.3e}"
            )
        logger.info(f"ADM charges for {ids.provenance}: E={float(energy):.6f}, |P|={np.linalg.norm(momentum):.3e}")
        return ChargeReport(
            radii=radii,
            energies=energies.tolist(),
            momenta=momenta.tolist(),
            energy=float(energy),
            momentum=[float(p) for p in momentum],
            residual=residual,
            decay_rate=ids.tau,
            richardson_terms=terms,
        )
