"""Exact initial-data generators used as ground truth.

Graph slices of Minkowski space, the time-symmetric Schwarzschild slice in
isotropic coordinates, and pp-wave metrics in adapted null coordinates. Every
derivative an oracle needs comes from hyper-dual automatic differentiation,
never from finite differences.

Sign convention for k:
    A graph slice {t = f(x)} gets ``k_ij = +d_i d_j f / sqrt(1 - |grad f|^2)``,
    i.e. k(X, Y) = <nabla_X n, Y> for the future unit normal n. With this sign
    the vacuum constraints vanish and the restriction ``u = a.x - f`` of the
    null linear function ``a.x - t`` solves ``Laplacian u = -(tr k)|grad u|``
    with ``Hess u = -k |grad u|``.
"""
import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from src.core.autodiff import HyperDual
from src.core.exceptions import HorizonTooClose, NonPositiveLapse, NotSpacelike
from src.models.data import InitialDataSet
from src.models.grid import Grid, MetricField, TensorField
from src.models.specs import PPWaveSpec, SliceSpec

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GraphReference:
    """Exact graph function data on the grid nodes."""

    f: np.ndarray
    df: np.ndarray
    ddf: np.ndarray
    g: np.ndarray
    k: np.ndarray

    def harmonic_function(self, grid: Grid, direction=(1.0, 0.0, 0.0)) -> np.ndarray:
        """Restriction of the null linear function a.x - t to the graph."""
        x = grid.coordinates()
        return sum(a * xi for a, xi in zip(direction, x)) - self.f


@dataclass(frozen=True)
class PPWaveFields:
    """Hyper-dual evaluations over (u, x1, x2) of the pp-wave functions."""

    a: HyperDual
    b: HyperDual
    lapse: HyperDual


class OracleService:
    """Builds ``InitialDataSet``s and pp-wave metrics from specs."""

    def build(self, spec: SliceSpec) -> InitialDataSet:
        if spec.kind == "schwarzschild":
            if spec.grid is None:
                raise ValueError("SliceSpec needs a grid")
            ids = self.schwarzschild_slice(spec.mass, spec.grid, spec.excision_radius)
        else:
            ids = self.graph_slice(spec)
        if spec.mask_radius is not None:
            ids = replace(ids, mask_radius=spec.mask_radius)
        return ids

    # ------------------------------------------------------------------
    # Minkowski graph slices
    # ------------------------------------------------------------------

    @staticmethod
    def _graph_parameters(spec: SliceSpec):
        if spec.kind == "flat":
            return 0.0, (0.0, 0.0, 0.0)
        if spec.kind == "graph":
            return spec.amplitude, (0.0, 0.0, 0.0)
        return spec.amplitude, spec.boost

    def graph_reference(self, spec: SliceSpec) -> GraphReference:
        if spec.grid is None:
            raise ValueError("SliceSpec needs a grid")
        grid = spec.grid
        c, v = self._graph_parameters(spec)
        x = HyperDual.variables(grid.coordinates())
        r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2]
        f = (r2 * (-1.0 / spec.width ** 2)).exp() * c + x[0] * v[0] + x[1] * v[1] + x[2] * v[2]
        df, ddf = f.grad, f.hess
        grad_sq = np.einsum("i...,i...->...", df, df)
        sup = float(np.sqrt(np.max(grad_sq)))
        if sup >= 1.0:
            raise NotSpacelike(f"Graph is not spacelike: sup|grad f| = {sup:.4f}")
        g = np.eye(3).reshape(3, 3, *([1] * grid.dim)) - df[:, None] * df[None, :]
        g = np.broadcast_to(g, (3, 3) + tuple(grid.shape)).copy()
        k = ddf / np.sqrt(1.0 - grad_sq)
        return GraphReference(f=f.val, df=df, ddf=ddf, g=g, k=k)

    def graph_slice(self, spec: SliceSpec) -> InitialDataSet:
        """Data induced on {t = f(x)} in Minkowski space.

        ``f(x) = v.x + c exp(-|x|^2 / w^2)``, differentiated exactly.

        Args:
            spec: ``flat``, ``graph`` or ``boosted_graph`` spec with a grid.

        Returns:
            InitialDataSet with g = delta - df df and k = ddf / sqrt(1 - |df|^2).

        Raises:
            NotSpacelike: sup|grad f| >= 1 on the grid.
        """
        ref = self.graph_reference(spec)
        grid = spec.grid
        logger.info(f"Graph slice ({spec.kind}, c={spec.amplitude}, w={spec.width}) on {grid.shape}")
        return InitialDataSet(
            g=MetricField.from_values(grid, ref.g),
            k=TensorField.symmetric2(grid, ref.k),
            tau=1.0,
            provenance=f"{spec.kind}(c={spec.amplitude}, w={spec.width}, v={tuple(spec.boost)})",
        )

    # ------------------------------------------------------------------
    # Schwarzschild
    # ------------------------------------------------------------------

    @staticmethod
    def conformal_factor(m: float, r: np.ndarray, excision_radius: Optional[float] = None) -> np.ndarray:
        r_eff = r if excision_radius is None else np.maximum(r, excision_radius)
        return 1.0 + m / (2.0 * r_eff)

    @staticmethod
    def schwarzschild_flux(m: float, r) -> np.ndarray:
        """Exact coordinate-sphere energy flux m (1 + m/2r)^3 of the isotropic slice."""
        return m * (1.0 + m / (2.0 * np.asarray(r, dtype=float))) ** 3

    def schwarzschild_slice(self, m: float, grid: Grid, excision_radius: Optional[float] = None) -> InitialDataSet:
        """Time-symmetric Schwarzschild data g = (1 + m/2|x|)^4 delta, k = 0.

        The box contains the coordinate origin, so a ball |x| <= r_x (default m)
        is excised: the conformal factor is frozen at r_x inside it and the
        nodes there are excluded from every diagnostic.

        Raises:
            HorizonTooClose: r_x < m/2 + 2h.
        """
        if m <= 0:
            raise ValueError(f"Mass must be positive, got {m}")
        r_x = m if excision_radius is None else excision_radius
        if r_x < 0.5 * m + 2.0 * grid.h:
            raise HorizonTooClose(f"Excision radius {r_x} is inside m/2 + 2h = {0.5 * m + 2.0 * grid.h}")
        psi = self.conformal_factor(m, grid.radius(), r_x)
        g = np.einsum("ij,...->ij...", np.eye(3), psi ** 4)
        logger.info(f"Schwarzschild slice m={m}, excision r_x={r_x} on {grid.shape}")
        return InitialDataSet(
            g=MetricField.from_values(grid, g),
            k=TensorField.symmetric2(grid, np.zeros((3, 3) + tuple(grid.shape))),
            tau=1.0,
            provenance=f"schwarzschild(m={m})",
            excision_radius=r_x,
        )

    # ------------------------------------------------------------------
    # pp-waves
    # ------------------------------------------------------------------

    @staticmethod
    def pp_wave_fields(spec: PPWaveSpec, grid: Grid) -> PPWaveFields:
        if grid.dim != 4:
            raise ValueError("pp-wave metrics live on 4D grids (tau, u, x1, x2)")
        coords = grid.coordinates()
        x = HyperDual.variables(coords[1:])
        a_spec, b_spec = spec.resolved()
        return PPWaveFields(a=a_spec.evaluate_dual(x), b=b_spec.evaluate_dual(x), lapse=spec.lapse.evaluate_dual(x))

    def pp_wave_metric(self, spec: PPWaveSpec, grid: Grid) -> MetricField:
        """gtilde = 2 dtau du + (V + a^2 + b^2) du^2 + 2a du dx1 + 2b du dx2 + dx1^2 + dx2^2.

        Coordinates are (tau, u, x1, x2); V is the |grad u|^-2 function.

        Raises:
            NonPositiveLapse: V <= 0 somewhere on the grid.
        """
        fields = self.pp_wave_fields(spec, grid)
        a, b, V = fields.a.val, fields.b.val, fields.lapse.val
        if np.min(V) <= 0:
            raise NonPositiveLapse(f"|grad u|^-2 function has min {np.min(V):.3e} <= 0")
        g = np.zeros((4, 4) + tuple(grid.shape))
        g[0, 1] = g[1, 0] = 1.0
        g[1, 1] = V + a * a + b * b
        g[1, 2] = g[2, 1] = a
        g[1, 3] = g[3, 1] = b
        g[2, 2] = g[3, 3] = 1.0
        return MetricField.from_values(grid, g, (-1, 1, 1, 1))
