"""Spacetime harmonic functions and the mass-inequality integrand.

Solves Laplacian_g u = -(tr_g k) |grad u| on the grid with Dirichlet plane
data u = a.x on the box faces (and on any excised ball) by a Picard outer
loop. Each linear step inverts the self-adjoint divergence-form operator

    L u = d_i (sqrt(det g) g^{ij} d_j u),      Laplacian u = L u / sqrt(det g),

with Jacobi-preconditioned conjugate gradients on the unknown (non-Dirichlet)
nodes. The operator is applied matrix-free: a compact three-point stencil
with face-averaged coefficients for the d_i(A d_i u) terms and nested
centred differences for the mixed terms, which together give a symmetric
negative-definite matrix.

Example:
    ```python
    solver = HarmonicService()
    sol = solver.solve_spacetime_harmonic(ids, SolverParams(direction=(1, 0, 0)))
    report = solver.hkk_report(ids, sol, charges)
    ```
"""
import logging
from typing import Optional

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from src.core.exceptions import GridTooSmall, LinearSolveDiverged, NonFinite, NotConverged
from src.models.data import ConstraintData, HarmonicSolution, InitialDataSet, PicardRecord
from src.models.grid import Grid, MetricField
from src.models.reports import ChargeReport, HkkReport
from src.models.specs import SolverParams
from src.services.geometry_service import GeometryService, tensor_norm
from src.services.ids_service import ConstraintService

logger = logging.getLogger(__name__)

MAX_HALVINGS = 5


def _axis_slice(ndim: int, axis: int, sl: slice):
    index = [slice(None)] * ndim
    index[axis] = sl
    return tuple(index)


class DivergenceOperator:
    """Matrix-free L u = d_i(w g^{ij} d_j u), w = sqrt(det g).

    Attributes:
        grid: Grid of the metric.
        density: w at every node.
        unknown: Boolean mask of non-Dirichlet nodes.
        diagonal: Diagonal of -L on the unknown nodes.
    """

    def __init__(self, metric: MetricField, unknown: np.ndarray):
        self.grid: Grid = metric.grid
        self.density = metric.volume_density
        self.coeff = metric.inverse * self.density
        self.unknown = unknown
        dim = self.grid.dim
        self.face = []
        diagonal = np.zeros(self.grid.shape)
        for i in range(dim):
            A = self.coeff[i, i]
            lo = _axis_slice(dim, i, slice(None, -1))
            hi = _axis_slice(dim, i, slice(1, None))
            face = 0.5 * (A[lo] + A[hi])
            self.face.append(face)
            h2 = self.grid.spacing[i] ** 2
            inner = _axis_slice(dim, i, slice(1, -1))
            diagonal[inner] += (face[lo] + face[hi]) / h2
        self.diagonal = diagonal[unknown]

    def apply(self, u: np.ndarray) -> np.ndarray:
        """L u on every node interior along all axes; zero on the box faces."""
        dim = self.grid.dim
        out = np.zeros(self.grid.shape)
        for i in range(dim):
            h_i = self.grid.spacing[i]
            lo = _axis_slice(dim, i, slice(None, -1))
            hi = _axis_slice(dim, i, slice(1, None))
            flux = self.face[i] * (u[hi] - u[lo]) / (h_i * h_i)
            inner = _axis_slice(dim, i, slice(1, -1))
            out[inner] += flux[hi] - flux[lo]
            for j in range(dim):
                if j == i:
                    continue
                inner_flux = self.coeff[i, j] * np.gradient(u, self.grid.spacing[j], axis=j)
                out += np.gradient(inner_flux, h_i, axis=i)
        edge = np.ones(self.grid.shape, dtype=bool)
        edge[tuple(slice(1, -1) for _ in range(dim))] = False
        out[edge] = 0.0
        return out

    def laplacian(self, u: np.ndarray) -> np.ndarray:
        return self.apply(u) / self.density


class HarmonicService:
    """Picard / preconditioned-CG solver for Laplacian u = -(tr k)|grad u|."""

    def __init__(self, geometry: Optional[GeometryService] = None,
                 constraints: Optional[ConstraintService] = None):
        self.geometry = geometry or GeometryService()
        self.constraints = constraints or ConstraintService(self.geometry)

    @staticmethod
    def dirichlet_mask(ids: InitialDataSet) -> np.ndarray:
        grid = ids.grid
        fixed = np.ones(grid.shape, dtype=bool)
        fixed[tuple(slice(1, -1) for _ in range(grid.dim))] = False
        if ids.excision_radius is not None:
            fixed |= grid.radius() <= ids.excision_radius
        return fixed

    @staticmethod
    def _regularized_grad_norm(u: np.ndarray, metric: MetricField, eps: float) -> np.ndarray:
        du = metric.grid.gradient(u)
        sq = np.einsum("ij...,i...,j...->...", metric.inverse, du, du)
        return np.sqrt(np.maximum(sq, 0.0) + eps * eps)

    def _residual(self, op: DivergenceOperator, u: np.ndarray, metric: MetricField, trace_k: np.ndarray,
                  eps: float, mask: np.ndarray) -> float:
        pointwise = op.laplacian(u) + trace_k * self._regularized_grad_norm(u, metric, eps)
        return float(np.max(np.abs(pointwise[mask])))

    def _linear_step(self, op: DivergenceOperator, u: np.ndarray, rhs: np.ndarray,
                     params: SolverParams) -> tuple:
        """Solve L v = w rhs on the unknown nodes, boundary values taken from ``u``."""
        unknown = op.unknown
        n = int(np.count_nonzero(unknown))
        full = np.zeros(op.grid.shape)

        def matvec(x: np.ndarray) -> np.ndarray:
            full[...] = 0.0
            full[unknown] = x
            return -op.apply(full)[unknown]

        A = LinearOperator((n, n), matvec=matvec, dtype=float)
        M = LinearOperator((n, n), matvec=lambda x: x / op.diagonal, dtype=float)
        # correction form: -L(v - u) = -(w rhs - L u)
        residual = -(op.density * rhs - op.apply(u))[unknown]
        counter = {"n": 0}

        def count(_):
            counter["n"] += 1

        if not np.any(residual):
            return u.copy(), 0
        delta, info = cg(A, residual, rtol=params.linear_tol, maxiter=params.linear_max, M=M, callback=count)
        if info < 0:
            raise LinearSolveDiverged(f"Conjugate gradients broke down (info={info})")
        if info > 0:
            rel = float(np.linalg.norm(A.matvec(delta) - residual) / np.linalg.norm(residual))
            if rel > 10.0 * params.linear_tol:
                logger.error(f"CG stalled at relative residual {rel:.3e} after {info} iterations")
                raise LinearSolveDiverged(f"Inner solve stagnated at relative residual {rel:.3e}")
        if not np.all(np.isfinite(delta)):
            raise NonFinite("Linear solve produced NaN or Inf")
        v = u.copy()
        v[unknown] += delta
        return v, counter["n"]

    def solve_spacetime_harmonic(self, ids: InitialDataSet, params: SolverParams,
                                 constraints: Optional[ConstraintData] = None) -> HarmonicSolution:
        """Solve Laplacian u = -(tr k)|grad u| with u = a.x on the Dirichlet set.

        Args:
            ids: Initial data set.
            params: Direction a, tolerances and regularization.
            constraints: Precomputed constraint data (for tr k), if available.

        Returns:
            HarmonicSolution. Reaching ``picard_max`` is flagged through
            ``converged = False``, not raised. When u0 = a.x already meets
            ``picard_tol`` the solve reports one iteration with no CG work.

        Raises:
            GridTooSmall: No unknown nodes.
            LinearSolveDiverged: Inner CG stagnates above ``linear_tol``.
            NonFinite: NaN or Inf in an iterate.
        """
        grid = ids.grid
        metric = ids.g
        eps = params.eps_reg if params.eps_reg is not None else grid.h ** 2
        fixed = self.dirichlet_mask(ids)
        unknown = ~fixed
        if not np.any(unknown):
            raise GridTooSmall("No interior nodes to solve for")
        interior = ids.interior_mask(self.geometry.boundary_layer)
        if not np.any(interior):
            raise GridTooSmall("Empty interior mask")
        trace_k = (
            constraints.trace_k if constraints is not None
            else np.einsum("ij...,ij...->...", metric.inverse, ids.k.values)
        )

        x = grid.coordinates()
        u = sum(a * xi for a, xi in zip(params.direction, x))
        op = DivergenceOperator(metric, unknown)
        residual = self._residual(op, u, metric, trace_k, eps, unknown)
        logger.info(f"Harmonic solve on {grid.shape}, a={params.direction}, initial residual {residual:.3e}")

        history = []
        converged = residual <= params.picard_tol
        iterations = 0
        if converged:
            # the sweep that verified u0 counts as the one iteration
            iterations = 1
            history.append(PicardRecord(1, residual, 0, 0))
        for iteration in range(1, 0 if converged else params.picard_max + 1):
            rhs = -trace_k * self._regularized_grad_norm(u, metric, eps)
            candidate, inner = self._linear_step(op, u, rhs, params)
            new_residual = self._residual(op, candidate, metric, trace_k, eps, unknown)
            halvings = 0
            while new_residual > residual and halvings < MAX_HALVINGS:
                halvings += 1
                candidate = u + (candidate - u) * 0.5
                new_residual = self._residual(op, candidate, metric, trace_k, eps, unknown)
            if new_residual > residual:
                logger.warning(f"Picard step {iteration} increased the residual after {halvings} halvings")
                history.append(PicardRecord(iteration, new_residual, inner, halvings))
                break
            u, residual, iterations = candidate, new_residual, iteration
            history.append(PicardRecord(iteration, residual, inner, halvings))
            logger.debug(f"Picard {iteration}: residual {residual:.3e}, {inner} CG iterations, {halvings} halvings")
            if residual <= params.picard_tol:
                converged = True
                break
        if not converged:
            logger.warning(f"Picard iteration stopped at residual {residual:.3e} > {params.picard_tol:.1e}")

        hess = self.geometry.hessian_laplacian(u, metric)
        min_grad = float(np.min(hess.grad_norm[interior]))
        logger.info(f"Harmonic solve finished: {iterations} iterations, residual {residual:.3e}, min|grad u| {min_grad:.4f}")
        return HarmonicSolution(
            u=u,
            grad=hess.grad,
            grad_norm=hess.grad_norm,
            hess=hess.hess,
            iterations=iterations,
            final_residual=residual,
            converged=converged,
            min_grad_norm=min_grad,
            eps_reg=eps,
            history=history,
        )

    def hkk_report(self, ids: InitialDataSet, sol: HarmonicSolution, charges: ChargeReport,
                   constraints: Optional[ConstraintData] = None) -> HkkReport:
        """Both sides of E - |P| >= 1/(16 pi) int (|Hess u + k|grad u||^2/|grad u| + 2 mu|grad u| + 2<J, grad u>).

        The integral runs over the interior mask with |grad u| floored at
        eps_reg in the denominator.

        Raises:
            NotConverged: ``sol`` did not converge.
        """
        if not sol.converged:
            raise NotConverged("hkk_report needs a converged harmonic solution")
        grid = ids.grid
        metric = ids.g
        constraints = constraints or self.constraints.constraint_data(ids)
        mask = ids.interior_mask(self.geometry.boundary_layer)

        residual = sol.hess.values + ids.k.values * sol.grad_norm
        hess_sq = tensor_norm(residual, metric.inverse, 2) ** 2
        hess_term = hess_sq / np.maximum(sol.grad_norm, sol.eps_reg)
        mu_term = 2.0 * constraints.mu * sol.grad_norm
        j_term = 2.0 * np.einsum("ij...,i...,j...->...", metric.inverse, constraints.J.values, sol.grad)
        integrand = hess_term + mu_term + j_term

        weight = metric.volume_density * grid.cell_volume / (16.0 * np.pi)
        pieces = [float(np.sum((term * weight)[mask])) for term in (hess_term, mu_term, j_term)]
        rhs = float(np.sum((integrand * weight)[mask]))
        lhs = charges.energy - charges.momentum_norm
        truncation = min(grid.extent) - self.geometry.boundary_layer * grid.h
        logger.info(f"Mass inequality: lhs={lhs:.5f}, rhs={rhs:.5f}, slack={lhs - rhs:.5f}")
        return HkkReport(
            lhs=lhs,
            rhs=rhs,
            slack=lhs - rhs,
            hessian_term=pieces[0],
            mu_term=pieces[1],
            j_term=pieces[2],
            min_integrand=float(np.min(integrand[mask])),
            truncation_radius=truncation,
            integrand=integrand,
        )
