"""Gaussian development gbar = -dt^2 + g_t of an initial data set.

Every node carries its own matrix ODE

    d/dt g = 2K,    d/dt K = K g^{-1} K,    g(0) = g,  K(0) = k,

integrated by classical RK4 over t in [-eps, eps]. The shape operator
S = g^{-1}K is evolved alongside (S' = -S^2) so that |K - gS| monitors the
integration. The system has the closed form g_t = g + 2tK + t^2 K g^{-1} K,
used for the degeneracy guard and the integration error. When Gauss and
Codazzi hold the development is flat; flatness is measured on thin time
windows through ``GeometryService.curvature_suite``.

Example:
    ```python
    service = GaussianDevelopmentService()
    result = service.evolve_gaussian_development(ids, eps=0.1, steps=32)
    service.report(result, eps=0.1, steps=32).flatness
    ```
"""
import logging
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.core.exceptions import SliceDegenerates, StepTooLarge
from src.models.data import DevelopmentResult, InitialDataSet
from src.models.grid import Grid, MetricField, as_matrix_stack, from_matrix_stack
from src.models.reports import DevelopmentReport
from src.services.geometry_service import GeometryService, masked_max, tensor_norm

logger = logging.getLogger(__name__)

WINDOW_NODES = 5
SLICE_DET_FLOOR = 1e-6
CONSISTENCY_TOL = 1e-5

State = Tuple[np.ndarray, np.ndarray, np.ndarray]


def closed_form_slice(g: np.ndarray, k: np.ndarray, t: float) -> np.ndarray:
    """g + 2tk + t^2 k g^{-1} k on matrix stacks ``(*S, 3, 3)``."""
    return g + 2.0 * t * k + t * t * (k @ np.linalg.solve(g, k))


def _symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + np.swapaxes(m, -1, -2))


def _derivative(state: State) -> State:
    _, K, S = state
    return 2.0 * K, K @ S, -(S @ S)


def rk4_step(state: State, dt: float) -> State:
    k1 = _derivative(state)
    k2 = _derivative(tuple(x + 0.5 * dt * d for x, d in zip(state, k1)))
    k3 = _derivative(tuple(x + 0.5 * dt * d for x, d in zip(state, k2)))
    k4 = _derivative(tuple(x + dt * d for x, d in zip(state, k3)))
    g, K, S = (
        x + dt / 6.0 * (a + 2.0 * b + 2.0 * c + d)
        for x, a, b, c, d in zip(state, k1, k2, k3, k4)
    )
    return _symmetrize(g), _symmetrize(K), S


class GaussianDevelopmentService:
    """Pointwise evolution of (g, k) and the flatness check of the result."""

    def __init__(self, geometry: Optional[GeometryService] = None):
        self.geometry = geometry or GeometryService()

    @staticmethod
    def _check_slice(g: np.ndarray, t: float, mask: np.ndarray) -> None:
        det = np.linalg.det(g)
        if not np.all(np.isfinite(det)) or np.min(det[mask]) <= SLICE_DET_FLOOR:
            raise SliceDegenerates(f"det g_t drops to {np.nanmin(det[mask]):.3e} at t = {t:+.4f}")

    @staticmethod
    def window_centres(steps: int) -> List[int]:
        """Step offsets of the window centres: 0, +-steps/2 and +-(steps - 2)."""
        half = steps // 2
        edge = steps - WINDOW_NODES // 2
        return sorted({0, half, -half, edge, -edge})

    def window_metric(self, grid: Grid, slices: np.ndarray, dt: float, centre: float) -> MetricField:
        """gbar = -dt^2 + g_t on a thin time window; ``slices`` is ``(5, 3, 3, *S)``."""
        grid4 = Grid.product(grid, dt, WINDOW_NODES, centre)
        values = np.zeros((4, 4) + tuple(grid4.shape))
        values[0, 0] = -1.0
        values[1:, 1:] = np.moveaxis(slices, 0, 2)
        return MetricField.from_values(grid4, values, (-1, 1, 1, 1))

    def evolve_gaussian_development(self, ids: InitialDataSet, eps: float = 0.1, steps: int = 32) -> DevelopmentResult:
        """Integrate the development over [-eps, eps] and measure its curvature.

        Forward and backward integrations from t = 0 run in lockstep. Slices are
        kept only while a flatness window still needs them.

        Args:
            ids: Initial data set.
            eps: Half-length of the time interval.
            steps: RK4 steps per half interval (>= 8).

        Returns:
            DevelopmentResult with flatness per window and integration diagnostics.

        Raises:
            SliceDegenerates: det g_t <= 1e-6 at some interior node and step.
            StepTooLarge: |K - g S| exceeds its tolerance.
        """
        if eps <= 0:
            raise ValueError(f"eps must be positive, got {eps}")
        if steps < 8:
            raise ValueError(f"Need at least 8 steps per half interval, got {steps}")
        grid = ids.grid
        dt = eps / steps
        mask = ids.interior_mask(self.geometry.boundary_layer)
        g0 = as_matrix_stack(ids.g.values)
        k0 = as_matrix_stack(ids.k.values)
        s0 = np.linalg.solve(g0, k0)
        times = np.linspace(-eps, eps, 2 * steps + 1)

        half = WINDOW_NODES // 2
        windows = {c: list(range(c - half, c + half + 1)) for c in self.window_centres(steps)}
        pending: Dict[int, np.ndarray] = {}
        window_flatness: Dict[float, float] = {}
        restriction = np.nan
        initial_slice = np.nan

        max_dg_dt = np.zeros(len(times))
        consistency = 0.0
        symmetry = 0.0
        static = float(np.max(np.abs(k0))) == 0.0
        forward: State = (g0, k0, s0)
        backward: State = (g0, k0, s0)

        for n in range(steps + 1):
            if n > 0:
                t = n * dt
                self._check_slice(closed_form_slice(g0, k0, t), t, mask)
                self._check_slice(closed_form_slice(g0, k0, -t), -t, mask)
                forward = rk4_step(forward, dt)
                backward = rk4_step(backward, -dt)
            for offset, state in ((n, forward), (-n, backward)):
                g, K, S = state
                self._check_slice(g, offset * dt, mask)
                scale = max(1.0, float(np.max(np.abs(K))))
                drift = float(np.max(np.abs(K - g @ S))) / scale
                if drift > CONSISTENCY_TOL:
                    raise StepTooLarge(
                        f"|K - gS| = {drift:.3e} at t = {offset * dt:+.4f}; reduce eps/steps = {dt:.3e}"
                    )
                consistency = max(consistency, drift)
                max_dg_dt[steps + offset] = masked_max(2.0 * np.max(np.abs(K), axis=(-2, -1)), mask)
                if any(offset in idx for idx in windows.values()):
                    pending[offset] = from_matrix_stack(g)
            if static:
                symmetry = max(symmetry, float(np.max(np.abs(forward[0] - backward[0]))))

            for centre, idx in list(windows.items()):
                if not all(i in pending for i in idx):
                    continue
                metric = self.window_metric(grid, np.stack([pending[i] for i in idx]), dt, centre * dt)
                suite = self.geometry.curvature_suite(
                    metric, mask=metric.grid.centre_slice_mask(mask), keep_riemann=False
                )
                window_flatness[centre * dt] = suite.max_riemann_norm
                if centre == 0:
                    second_ff = self.geometry.centre_slice_extrinsic(metric)
                    restriction = masked_max(tensor_norm(second_ff - ids.k.values, ids.g.inverse, 2), mask)
                    initial_slice = float(np.max(np.abs(metric.values[1:, 1:, half] - ids.g.values)))
                logger.debug(f"Window t = {centre * dt:+.4f}: max|Riem| = {suite.max_riemann_norm:.3e}")
                del windows[centre]
                needed = {i for rest in windows.values() for i in rest}
                for i in [i for i in pending if i not in needed]:
                    del pending[i]

        integration_error = max(
            float(np.max(np.abs(forward[0] - closed_form_slice(g0, k0, eps)))),
            float(np.max(np.abs(backward[0] - closed_form_slice(g0, k0, -eps)))),
        )
        flatness = max(window_flatness.values())
        logger.info(
            f"Gaussian development of {ids.provenance}: eps={eps}, steps={steps}, "
            f"flatness={flatness:.3e}, ODE error={integration_error:.3e}"
        )
        return DevelopmentResult(
            grid=grid,
            times=times,
            final=(from_matrix_stack(backward[0]), from_matrix_stack(forward[0])),
            max_dg_dt=max_dg_dt,
            flatness=flatness,
            window_flatness=dict(sorted(window_flatness.items())),
            consistency=consistency,
            integration_error=integration_error,
            restriction_residual=restriction,
            initial_slice_residual=initial_slice,
            time_symmetry_residual=symmetry if static else None,
        )

    @staticmethod
    def report(result: DevelopmentResult, eps: float, steps: int) -> DevelopmentReport:
        return DevelopmentReport(
            eps=eps,
            steps=steps,
            flatness=result.flatness,
            window_flatness={f"{t:+.4f}": v for t, v in result.window_flatness.items()},
            max_dg_dt=float(np.max(result.max_dg_dt)),
            consistency=result.consistency,
            integration_error=result.integration_error,
            restriction_residual=result.restriction_residual,
            initial_slice_residual=result.initial_slice_residual,
            time_symmetry_residual=result.time_symmetry_residual,
        )
