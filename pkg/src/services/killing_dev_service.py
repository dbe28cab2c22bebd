"""Killing developments and the pp-wave curvature identities.

A solved spacetime harmonic function u turns (g, k) into the Lorentzian metric

    gtilde = 2 dtau du + g

on a thin tau slab around the data slice. Its null vector d_tau = grad u is
Killing, and parallel for every u. The tau = 0 slice has second fundamental
form -hess(u)/|grad u|, which equals k exactly when hess(u) = -k|grad u|
(the rigid case); the development is then flat.

The pp-wave family

    gtilde = 2 dtau du + (V + a^2 + b^2) du^2 + 2a du dx1 + 2b du dx2 + dx1^2 + dx2^2

is checked against its closed-form Ricci components; in the solved form
a = x2 psi(u) + l_x1, b = -x1 psi(u) + l_x2 the curvature is carried by

    F = V/2 + l_x1^2/2 + l_x2^2/2 + l_x1 x2 psi - l_x2 x1 psi - l_u

through R(grad u, d_a, grad u, d_b) = -|grad u|^4 F_ab and Ric_uu = -Lap F.
"""
import itertools
import logging
from typing import List, Optional, Tuple

import numpy as np

from src.core.autodiff import HyperDual
from src.core.exceptions import GradientTooSmall
from src.models.data import HarmonicSolution, InitialDataSet, KillingDevelopment
from src.models.grid import Grid, MetricField, TensorField
from src.models.reports import KillingReport, PPWaveReport
from src.models.specs import PPWaveSpec
from src.services.geometry_service import GeometryService, masked_max, tensor_norm
from src.services.ids_service import ConstraintService
from src.services.oracle_service import OracleService

logger = logging.getLogger(__name__)

TAU_NODES = 5
COORDINATE_NAMES = ("tau", "u", "x1", "x2")
PREDICTED_RICCI = {(1, 1), (1, 2), (1, 3)}
OFF_LIST_COEFFICIENT = 10.0


def unit_normal(metric: MetricField) -> np.ndarray:
    """-grad t / sqrt(-g^tt) on the centre slice of a thin-axis metric, shape ``(d, *S)``."""
    ginv = metric.inverse[:, :, metric.grid.shape[0] // 2]
    return -ginv[0] / np.sqrt(-ginv[0, 0])


class KillingDevelopmentService:
    """Builds Killing developments and checks the pp-wave identities."""

    def __init__(self, geometry: Optional[GeometryService] = None, oracle: Optional[OracleService] = None,
                 constraints: Optional[ConstraintService] = None):
        self.geometry = geometry or GeometryService()
        self.oracle = oracle or OracleService()
        self.constraints = constraints or ConstraintService(self.geometry)

    # ------------------------------------------------------------------
    # Dataset path
    # ------------------------------------------------------------------

    @staticmethod
    def development_metric(ids: InitialDataSet, du: np.ndarray, tau_spacing: float) -> MetricField:
        """gtilde_tautau = 0, gtilde_taui = d_i u, gtilde_ij = g_ij on a thin tau slab."""
        grid4 = Grid.product(ids.grid, tau_spacing, TAU_NODES)
        values = np.zeros((4, 4) + tuple(grid4.shape))
        values[0, 1:] = du[:, None]
        values[1:, 0] = du[:, None]
        values[1:, 1:] = ids.g.values[:, :, None]
        return MetricField.from_values(grid4, values, (-1, 1, 1, 1))

    def build_killing_development(self, ids: InitialDataSet, sol: HarmonicSolution,
                                  tau_extent: Optional[float] = None) -> KillingDevelopment:
        """Killing development of a solved dataset and its diagnostics.

        Args:
            ids: Initial data set the solution was computed on.
            sol: Converged spacetime harmonic function.
            tau_extent: Half-width of the tau slab (default 2h).

        Returns:
            KillingDevelopment with the null Hessian, curvature and slice residuals.

        Raises:
            GradientTooSmall: min |grad u| <= 10 eps_reg.
            SingularMetric: gtilde degenerate somewhere on the slab.
        """
        if sol.min_grad_norm <= 10.0 * sol.eps_reg:
            raise GradientTooSmall(
                f"min |grad u| = {sol.min_grad_norm:.3e} <= 10 eps_reg = {10.0 * sol.eps_reg:.3e}"
            )
        grid = ids.grid
        tau_extent = tau_extent or 2.0 * grid.h
        du = sol.grad
        metric = self.development_metric(ids, du, tau_extent / (TAU_NODES // 2))
        mask = ids.interior_mask(self.geometry.boundary_layer)
        centre = TAU_NODES // 2
        raiser = metric.norm_raiser[:, :, centre]

        # u is tau-independent: only spatial second partials survive
        du4 = np.zeros((4,) + tuple(grid.shape))
        du4[1:] = du
        ddu = np.zeros((4, 4) + tuple(grid.shape))
        ddu[1:, 1:] = grid.gradient(du)
        gamma = self.geometry.centre_slice_christoffel(metric)
        null_hess = ddu - np.einsum("cab...,c...->ab...", gamma, du4)
        null_hessian = masked_max(tensor_norm(null_hess, raiser, 2), mask)

        ginv = metric.inverse[:, :, centre]
        null_norm = np.einsum("ab...,a...,b...->...", ginv, du4, du4)
        null_norm_residual = max(masked_max(np.abs(null_norm), mask), float(np.max(np.abs(metric.values[0, 0]))))

        second_ff = self.geometry.centre_slice_extrinsic(metric)
        slice_residual = masked_max(tensor_norm(second_ff - ids.k.values, ids.g.inverse, 2), mask)

        suite = self.geometry.curvature_suite(metric, mask=metric.grid.centre_slice_mask(mask), keep_riemann=False)
        scalar = masked_max(np.abs(suite.scalar[centre]), mask)
        logger.info(
            f"Killing development of {ids.provenance}: |hess u|={null_hessian:.3e}, "
            f"max|Riem|={suite.max_riemann_norm:.3e}, |II - k|={slice_residual:.3e}"
        )
        return KillingDevelopment(
            gtilde=metric,
            null_hessian=null_hessian,
            max_riemann_norm=suite.max_riemann_norm,
            scalar_curvature=scalar,
            null_norm_residual=null_norm_residual,
            slice_extrinsic_residual=slice_residual,
            normal=unit_normal(metric),
        )

    @staticmethod
    def report(dev: KillingDevelopment) -> KillingReport:
        return KillingReport(
            null_hessian=dev.null_hessian,
            max_riemann_norm=dev.max_riemann_norm,
            scalar_curvature=dev.scalar_curvature,
            null_norm_residual=dev.null_norm_residual,
            slice_extrinsic_residual=dev.slice_extrinsic_residual,
        )

    # ------------------------------------------------------------------
    # pp-waves
    # ------------------------------------------------------------------

    @staticmethod
    def closed_form_ricci(a: HyperDual, b: HyperDual, lapse: HyperDual) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Ric(d_u, d_x1), Ric(d_u, d_x2), Ric(d_u, d_u); derivative indices are (u, x1, x2)."""
        ric_u1 = 0.5 * (-a.hess[2, 2] + b.hess[1, 2])
        ric_u2 = 0.5 * (a.hess[1, 2] - b.hess[1, 1])
        lap_potential = lapse.hess[1, 1] + lapse.hess[2, 2]
        for f in (a, b):
            for i in (1, 2):
                lap_potential = lap_potential + 2.0 * (f.grad[i] ** 2 + f.val * f.hess[i, i])
        ric_uu = 0.5 * (a.grad[2] - b.grad[1]) ** 2 - 0.5 * lap_potential + a.hess[0, 1] + b.hess[0, 2]
        return ric_u1, ric_u2, ric_uu

    @staticmethod
    def potential(spec: PPWaveSpec, x: List[HyperDual]) -> HyperDual:
        """F of the solved form, with exact derivatives in (u, x1, x2)."""
        psi = spec.psi.evaluate_dual(x) if spec.psi is not None else 0.0
        l1 = spec.l.derivative(1).evaluate_dual(x) if spec.l is not None else 0.0
        l2 = spec.l.derivative(2).evaluate_dual(x) if spec.l is not None else 0.0
        lu = spec.l.derivative(0).evaluate_dual(x) if spec.l is not None else 0.0
        lapse = spec.lapse.evaluate_dual(x)
        _, x1, x2 = x
        return lapse * 0.5 + l1 * l1 * 0.5 + l2 * l2 * 0.5 + l1 * x2 * psi - l2 * x1 * psi - lu

    def pp_wave_ricci_check(self, spec: PPWaveSpec, grid4: Grid, assume_dec: bool = False) -> PPWaveReport:
        """Numeric pp-wave curvature against its closed forms.

        Args:
            spec: pp-wave functions, explicit (a, b) or solved (psi, l).
            grid4: Grid over (tau, u, x1, x2) with a thin tau axis.
            assume_dec: The data are meant to satisfy the dominant energy
                condition; a failed superharmonicity check is then logged.

        Returns:
            PPWaveReport of max residuals over the interior of the tau = 0 slice.

        Raises:
            NonPositiveLapse: V <= 0 somewhere.
        """
        metric = self.oracle.pp_wave_metric(spec, grid4)
        spatial = grid4.spatial()
        centre = grid4.shape[0] // 2
        mask = spatial.interior_mask(self.geometry.boundary_layer)
        suite = self.geometry.curvature_suite(metric, mask=grid4.centre_slice_mask(mask))
        ricci = suite.ricci.values[:, :, centre]
        riemann = suite.riemann.values[:, :, :, :, centre]

        fields = self.oracle.pp_wave_fields(spec, grid4)
        a, b, lapse = (self._centre(f, centre) for f in (fields.a, fields.b, fields.lapse))
        ric_u1, ric_u2, ric_uu = self.closed_form_ricci(a, b, lapse)

        h = spatial.h
        threshold = OFF_LIST_COEFFICIENT * h * h
        off_values = {}
        for i, j in itertools.combinations_with_replacement(range(4), 2):
            if (i, j) not in PREDICTED_RICCI:
                off_values[f"Ric_{COORDINATE_NAMES[i]}_{COORDINATE_NAMES[j]}"] = masked_max(np.abs(ricci[i, j]), mask)
        off_list = [name for name, value in off_values.items() if value > threshold]

        report = {
            "ricci_u1": masked_max(np.abs(ricci[1, 2] - ric_u1), mask),
            "ricci_u2": masked_max(np.abs(ricci[1, 3] - ric_u2), mask),
            "ricci_uu": masked_max(np.abs(ricci[1, 1] - ric_uu), mask),
            "off_list": off_list,
            "off_list_max": max(off_values.values()),
            "off_list_threshold": threshold,
            "scalar_curvature": masked_max(np.abs(suite.scalar[centre]), mask),
            "max_riemann_norm": suite.max_riemann_norm,
            "solved_form": spec.solved_form,
        }

        normal = unit_normal(metric)
        V = lapse.val
        expected = np.stack([V, -np.ones_like(V), a.val, b.val]) / np.sqrt(V)
        report["normal_vector"] = masked_max(np.max(np.abs(normal - expected), axis=0), mask)

        slice_metric = MetricField.from_values(spatial, metric.values[1:, 1:, centre])
        slice_k = TensorField.symmetric2(spatial, self.geometry.centre_slice_extrinsic(metric))
        ids = InitialDataSet(slice_metric, slice_k, tau=1.0, provenance="pp-wave slice")
        data = self.constraints.constraint_data(ids)
        ric_nn = np.einsum("ab...,a...,b...->...", ricci, normal, normal)
        report["normal_mu"] = masked_max(np.abs(data.mu - ric_nn), mask)
        # k = g(nabla N, .) with the same N, so the contracted Codazzi equation gives J = +Ric(N, .)
        ric_n = np.einsum("ab...,a...->b...", ricci, normal)[1:]
        report["normal_J"] = masked_max(np.max(np.abs(data.J.values - ric_n), axis=0), mask)

        if spec.solved_form:
            x = HyperDual.variables(spatial.coordinates())
            F = self.potential(spec, x)
            lap_F = F.hess[1, 1] + F.hess[2, 2]
            grad_u = np.stack([np.zeros_like(V), np.ones_like(V), -a.val, -b.val]) / V
            sectional = np.einsum("abcd...,a...,c...->bd...", riemann, grad_u, grad_u)[2:, 2:]
            predicted = -F.hess[1:, 1:] / V ** 2
            report["riemann_F"] = masked_max(np.max(np.abs(sectional - predicted), axis=(0, 1)), mask)
            report["ricci_uu_laplacian_F"] = masked_max(np.abs(ricci[1, 1] + lap_F), mask)
            report["max_laplacian_F"] = masked_max(lap_F, mask)
            report["superharmonic"] = report["max_laplacian_F"] <= threshold
            report["tangential_J"] = masked_max(np.max(np.abs(data.J.values[1:]), axis=0), mask)
            if assume_dec and not report["superharmonic"]:
                logger.warning(f"Lap F reaches {report['max_laplacian_F']:.3e} > {threshold:.3e} on DEC data")

        logger.info(
            f"pp-wave check: Ric residuals u1={report['ricci_u1']:.3e}, u2={report['ricci_u2']:.3e}, "
            f"uu={report['ricci_uu']:.3e}; off-list {off_list or 'none'}"
        )
        return PPWaveReport(**report)

    @staticmethod
    def _centre(f: HyperDual, centre: int) -> HyperDual:
        return HyperDual(f.val[centre], f.grad[:, centre], f.hess[:, :, centre])
