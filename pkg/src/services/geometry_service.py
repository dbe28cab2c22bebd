"""Finite-difference tensor calculus on gridded metrics.

Dimension- and signature-generic: Christoffel symbols, Riemann/Ricci/scalar
curvature, Hessians and Laplacians, covariant derivatives and divergences of
symmetric 2-tensors, frame-invariant norms, sphere sampling and decay fits.

All derivatives are centred second-order differences with one-sided
second-order stencils at the box faces (``Grid.partial``). Curvature is
obtained by differentiating the Christoffel symbols, one code path for every
signature, and is evaluated in slabs along the longest axis so large 4D grids
fit in memory.

Index conventions:
    - ``Gamma[k, i, j] = Gamma^k_{ij}``
    - ``R^a_{bcd} = d_c Gamma^a_{db} - d_d Gamma^a_{cb} + Gamma^a_{ce} Gamma^e_{db} - Gamma^a_{de} Gamma^e_{cb}``
    - ``R_{abcd} = g_{ae} R^e_{bcd}`` so that ``R_{1212} > 0`` on round spheres
    - ``Ric_{bd} = R^a_{bad}``

Example:
    ```python
    geometry = GeometryService()
    suite = geometry.curvature_suite(metric)
    suite.scalar, suite.max_riemann_norm
    ```
"""
import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.ndimage import map_coordinates
from scipy.special import roots_legendre

from src.core.concurrency import ordered_map
from src.core.config import settings
from src.core.exceptions import (
    DegenerateFit,
    GridTooSmall,
    NonFinite,
    ShellOutsideGrid,
    SingularMetric,
    SymmetryViolation,
)
from src.models.data import CurvatureSuite, HessianResult, SphereQuadrature
from src.models.grid import Grid, MetricField, TensorField
from src.models.reports import DecayFit

logger = logging.getLogger(__name__)

_LETTERS = "abcdefgh"

HALO = 2


def raise_slots(values: np.ndarray, raiser: np.ndarray, rank: int) -> np.ndarray:
    """Contract every one of the first ``rank`` slots with ``raiser``."""
    idx = _LETTERS[:rank]
    for k in range(rank):
        target = idx[:k] + "z" + idx[k + 1:]
        values = np.einsum(f"z{idx[k]}...,{idx}...->{target}...", raiser, values)
    return values


def tensor_norm(values: np.ndarray, raiser: np.ndarray, rank: int) -> np.ndarray:
    """Pointwise norm sqrt(T_{a..} T^{a..}) with indices raised by ``raiser``."""
    if rank == 0:
        return np.abs(values)
    raised = raise_slots(values, raiser, rank)
    square = np.sum((values * raised).reshape((-1,) + values.shape[rank:]), axis=0)
    return np.sqrt(np.maximum(square, 0.0))


def masked_max(values: np.ndarray, mask: Optional[np.ndarray]) -> float:
    data = values if mask is None else values[mask]
    if data.size == 0:
        raise GridTooSmall("No interior nodes left for the diagnostic")
    return float(np.max(data))


def project_algebraic_curvature(R: np.ndarray) -> np.ndarray:
    """Project a 4-index tensor onto the algebraic curvature tensors.

    The result is antisymmetric in each pair, symmetric under pair exchange and
    satisfies the first Bianchi identity to round-off.
    """
    R = 0.5 * (R - np.einsum("bacd...->abcd...", R))
    R = 0.5 * (R - np.einsum("abdc...->abcd...", R))
    R = 0.5 * (R + np.einsum("cdab...->abcd...", R))
    cyclic = R + np.einsum("acdb...->abcd...", R) + np.einsum("adbc...->abcd...", R)
    return R - cyclic / 3.0


def curvature_symmetry_residuals(R: np.ndarray, mask: Optional[np.ndarray] = None) -> Dict[str, float]:
    """Max pair-antisymmetry, pair-symmetry and first-Bianchi defects."""
    checks = {
        "antisymmetry": np.abs(R + np.einsum("bacd...->abcd...", R)),
        "pair_symmetry": np.abs(R - np.einsum("cdab...->abcd...", R)),
        "bianchi": np.abs(R + np.einsum("acdb...->abcd...", R) + np.einsum("adbc...->abcd...", R)),
    }
    out = {}
    for name, defect in checks.items():
        pointwise = np.max(defect.reshape((-1,) + R.shape[4:]), axis=0)
        out[name] = float(np.max(pointwise[mask])) if mask is not None and np.any(mask) else float(np.max(pointwise))
    return out


class GeometryService:
    """Finite-difference differential geometry on ``MetricField``s.

    Attributes:
        boundary_layer: Nodes excluded at the box faces for diagnostics.
        chunk_nodes: Slab thickness for curvature evaluation.
        threads: Worker cap for slab evaluation (``None`` uses IDSLAB_THREADS).
    """

    def __init__(self, boundary_layer: Optional[int] = None, chunk_nodes: Optional[int] = None,
                 threads: Optional[int] = None):
        self.boundary_layer = boundary_layer or settings.boundary_layer
        self.chunk_nodes = chunk_nodes or settings.chunk_nodes
        self.threads = threads

    # ------------------------------------------------------------------
    # Connection
    # ------------------------------------------------------------------

    def christoffel_values(self, metric: MetricField) -> np.ndarray:
        grid = metric.grid
        dg = grid.gradient(metric.values)  # dg[l, i, j] = d_l g_ij
        first = 0.5 * (
            np.einsum("ijl...->lij...", dg) + np.einsum("jil...->lij...", dg) - dg
        )
        gamma = np.einsum("kl...,lij...->kij...", metric.inverse, first)
        gamma = 0.5 * (gamma + np.swapaxes(gamma, 1, 2))
        if not np.all(np.isfinite(gamma)):
            raise NonFinite("Christoffel symbols contain NaN or Inf")
        return gamma

    def christoffel(self, metric: MetricField) -> TensorField:
        """Gamma^k_{ij} = 1/2 g^{kl}(d_i g_jl + d_j g_il - d_l g_ij).

        Args:
            metric: Invertible metric of any signature.

        Returns:
            Rank-3 field, slots (up, down, down), symmetric in the lower pair.

        Raises:
            SingularMetric: Raised by ``MetricField`` on construction.
            NonFinite: NaN or Inf in the result.
        """
        return TensorField(metric.grid, self.christoffel_values(metric), ("up", "down", "down"), ((1, 2),))

    # ------------------------------------------------------------------
    # Curvature
    # ------------------------------------------------------------------

    def _curvature_block(self, metric: MetricField, mask: Optional[np.ndarray], keep_riemann: bool) -> Dict:
        grid = metric.grid
        gamma = self.christoffel_values(metric)
        dgamma = grid.gradient(gamma)  # dgamma[c, a, d, b] = d_c Gamma^a_{db}
        r_up = (
            np.einsum("cadb...->abcd...", dgamma)
            - np.einsum("dacb...->abcd...", dgamma)
            + np.einsum("ace...,edb...->abcd...", gamma, gamma)
            - np.einsum("ade...,ecb...->abcd...", gamma, gamma)
        )
        del dgamma
        raw = np.einsum("ae...,ebcd...->abcd...", metric.values, r_up)
        del r_up
        raw_residuals = curvature_symmetry_residuals(raw, mask)
        riemann = project_algebraic_curvature(raw)
        del raw
        residuals = curvature_symmetry_residuals(riemann)
        ginv = metric.inverse
        ricci = np.einsum("ac...,abcd...->bd...", ginv, riemann)
        ricci = 0.5 * (ricci + np.swapaxes(ricci, 0, 1))
        scalar = np.einsum("bd...,bd...->...", ginv, ricci)
        norm = tensor_norm(riemann, metric.norm_raiser, 4)
        return {
            "riemann": riemann if keep_riemann else None,
            "ricci": ricci,
            "scalar": scalar,
            "norm": norm,
            "residuals": residuals,
            "raw_residuals": raw_residuals,
            "max_abs": float(np.max(np.abs(riemann))),
        }

    def _chunk_size(self, grid: Grid, axis: int) -> int:
        """Slab thickness capped so one padded 4-index block stays within the memory budget."""
        plane = grid.num_nodes // grid.shape[axis]
        block = plane * grid.dim ** 4 * 8
        fit = settings.block_bytes // block - 2 * HALO
        return max(1, min(self.chunk_nodes, fit))

    def curvature_suite(self, metric: MetricField, mask: Optional[np.ndarray] = None,
                        keep_riemann: bool = True) -> CurvatureSuite:
        """Riemann, Ricci and scalar curvature plus symmetry diagnostics.

        The grid is split into slabs along its longest axis, each padded by a
        two-node halo; slab results are bitwise identical to a whole-grid pass.

        Args:
            metric: Invertible metric.
            mask: Nodes over which ``max_riemann_norm`` is taken (default: interior).
            keep_riemann: Drop the full Riemann tensor when only contractions are needed.

        Returns:
            CurvatureSuite with the lowered Riemann tensor, Ricci, scalar and norms.

        Raises:
            GridTooSmall: Fewer than 5 nodes along some axis or empty mask.
            SingularMetric: Metric not invertible.
        """
        grid = metric.grid
        if min(grid.shape) < 5:
            raise GridTooSmall(f"Curvature needs at least 5 nodes per axis, got {grid.shape}")
        if mask is None:
            mask = grid.interior_mask(self.boundary_layer)

        axis = int(np.argmax(grid.shape))
        n = grid.shape[axis]
        chunk = self._chunk_size(grid, axis)
        bounds = [(s, min(s + chunk, n)) for s in range(0, n, chunk)]
        logger.debug(f"Curvature on {grid.shape} in {len(bounds)} slabs along axis {axis}")

        def evaluate(span: Tuple[int, int]) -> Dict:
            start, stop = span
            lo, hi = max(0, start - HALO), min(n, stop + HALO)
            block_mask = np.take(mask, range(lo, hi), axis=axis)
            block = self._curvature_block(metric.restrict(axis, lo, hi), block_mask, keep_riemann)
            keep = range(start - lo, stop - lo)
            trimmed = {}
            for key in ("riemann", "ricci", "scalar", "norm"):
                value = block[key]
                if value is not None:
                    trimmed[key] = np.take(value, keep, axis=value.ndim - grid.dim + axis)
                else:
                    trimmed[key] = None
            trimmed["residuals"] = block["residuals"]
            trimmed["raw_residuals"] = block["raw_residuals"]
            trimmed["max_abs"] = block["max_abs"]
            return trimmed

        blocks = ordered_map(evaluate, bounds, self.threads)

        def join(key: str, rank: int) -> Optional[np.ndarray]:
            if blocks[0][key] is None:
                return None
            return np.concatenate([b[key] for b in blocks], axis=rank + axis)

        riemann = join("riemann", 4)
        ricci = join("ricci", 2)
        scalar = join("scalar", 0)
        norm = join("norm", 0)
        residuals = {k: max(b["residuals"][k] for b in blocks) for k in blocks[0]["residuals"]}
        raw_residuals = {k: max(b["raw_residuals"][k] for b in blocks) for k in blocks[0]["raw_residuals"]}
        residuals["max_abs_riemann"] = max(b["max_abs"] for b in blocks)

        if not (np.all(np.isfinite(scalar)) and np.all(np.isfinite(norm))):
            raise NonFinite("Curvature contains NaN or Inf")
        return CurvatureSuite(
            riemann=TensorField(grid, riemann, ("down",) * 4) if riemann is not None else None,
            ricci=TensorField.symmetric2(grid, ricci),
            scalar=scalar,
            riemann_norm=norm,
            max_riemann_norm=masked_max(norm, mask),
            residuals=residuals,
            raw_residuals=raw_residuals,
        )

    # ------------------------------------------------------------------
    # Scalars and symmetric 2-tensors
    # ------------------------------------------------------------------

    def hessian_laplacian(self, f: np.ndarray, metric: MetricField,
                          gamma: Optional[np.ndarray] = None) -> HessianResult:
        """Covariant Hessian, Laplacian and gradient norm of a scalar field.

        Args:
            f: Scalar field of shape ``grid.shape``.
            metric: Invertible metric.
            gamma: Precomputed Christoffel values, if available.

        Returns:
            HessianResult with hess_ij = d_i d_j f - Gamma^k_ij d_k f,
            lap = g^ij hess_ij and grad_norm = sqrt|g^ij d_i f d_j f|.
        """
        grid = metric.grid
        gamma = self.christoffel_values(metric) if gamma is None else gamma
        df = grid.gradient(f)
        ddf = grid.gradient(df)
        hess = ddf - np.einsum("kij...,k...->ij...", gamma, df)
        hess_field = TensorField.symmetric2(grid, hess)
        ginv = metric.inverse
        lap = np.einsum("ij...,ij...->...", ginv, hess_field.values)
        grad_sq = np.einsum("ij...,i...,j...->...", ginv, df, df)
        return HessianResult(hess=hess_field, lap=lap, grad_norm=np.sqrt(np.abs(grad_sq)), grad=df)

    def covariant_derivative(self, T: TensorField, metric: MetricField,
                             gamma: Optional[np.ndarray] = None) -> np.ndarray:
        """nabla_c T_ab as an array of shape ``(d, d, d, *S)`` with c first."""
        if T.rank != 2 or T.covariance != ("down", "down"):
            raise ValueError("covariant_derivative expects a down-down rank-2 field")
        gamma = self.christoffel_values(metric) if gamma is None else gamma
        dT = metric.grid.gradient(T.values)
        return (
            dT
            - np.einsum("mca...,mb...->cab...", gamma, T.values)
            - np.einsum("mcb...,am...->cab...", gamma, T.values)
        )

    def covariant_div(self, T: TensorField, metric: MetricField,
                      gamma: Optional[np.ndarray] = None) -> TensorField:
        """(div T)_b = g^{ca} nabla_c T_ab for a symmetric down-down 2-tensor.

        Raises:
            SymmetryViolation: ``T`` is not symmetric.
        """
        if (0, 1) not in T.symmetry:
            scale = max(1.0, float(np.max(np.abs(T.values))))
            if np.max(np.abs(T.values - np.swapaxes(T.values, 0, 1))) > 1e-10 * scale:
                raise SymmetryViolation("covariant_div needs a symmetric tensor")
        nabla = self.covariant_derivative(T, metric, gamma)
        div = np.einsum("ca...,cab...->b...", metric.inverse, nabla)
        return TensorField.covector(metric.grid, div)

    def metric_compatibility_residual(self, metric: MetricField, mask: Optional[np.ndarray] = None) -> float:
        """Max over ``mask`` of |nabla g|, which vanishes in the continuum."""
        nabla = self.covariant_derivative(metric.tensor, metric)
        norm = tensor_norm(nabla, metric.norm_raiser, 3)
        mask = metric.grid.interior_mask(self.boundary_layer) if mask is None else mask
        return masked_max(norm, mask)

    @staticmethod
    def centre_slice_christoffel(metric: MetricField) -> np.ndarray:
        """Gamma^k_ij on the centre node of the thin leading axis.

        Time derivatives are centred differences across the centre node; the
        result has shape ``(d, d, d, *spatial_shape)``.
        """
        grid = metric.grid
        c = grid.shape[0] // 2
        g = metric.values[:, :, c]
        dg = np.empty((grid.dim,) + g.shape)  # dg[l, i, j] = d_l g_ij
        dg[0] = (metric.values[:, :, c + 1] - metric.values[:, :, c - 1]) / (2.0 * grid.spacing[0])
        dg[1:] = grid.spatial().gradient(g)
        first = 0.5 * (
            np.einsum("ijl...->lij...", dg) + np.einsum("jil...->lij...", dg) - dg
        )
        gamma = np.einsum("kl...,lij...->kij...", metric.inverse[:, :, c], first)
        return 0.5 * (gamma + np.swapaxes(gamma, 1, 2))

    @classmethod
    def centre_slice_extrinsic(cls, metric: MetricField) -> np.ndarray:
        """Second fundamental form of the centre slice {t = t_c} of a thin-axis metric.

        II_ab = -nabla^2_ab t / sqrt(-g^tt) = Gamma^t_ab / sqrt(-g^tt) for spatial
        a, b, taken with the normal -grad t / sqrt(-g^tt).

        Returns:
            Array of shape ``(d-1, d-1, *spatial_shape)``.
        """
        g00 = metric.inverse[0, 0, metric.grid.shape[0] // 2]
        if np.max(g00) >= 0:
            raise SingularMetric("Coordinate 0 is not a time function (g^00 >= 0 somewhere)")
        gamma = cls.centre_slice_christoffel(metric)
        return gamma[0, 1:, 1:] / np.sqrt(-g00)

    # ------------------------------------------------------------------
    # Spheres and decay
    # ------------------------------------------------------------------

    @staticmethod
    def sphere_quadrature(radius: float, n_theta: Optional[int] = None,
                          n_phi: Optional[int] = None) -> SphereQuadrature:
        """Gauss-Legendre in cos(theta) times trapezoid in phi; weights sum to 4 pi."""
        n_theta = n_theta or settings.quadrature_theta
        n_phi = n_phi or settings.quadrature_phi
        z, w_z = roots_legendre(n_theta)
        phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
        Z, PHI = np.meshgrid(z, phi, indexing="ij")
        s = np.sqrt(1.0 - Z * Z)
        normals = np.stack([s * np.cos(PHI), s * np.sin(PHI), Z]).reshape(3, -1)
        weights = (w_z[:, None] * np.full(n_phi, 2.0 * np.pi / n_phi)[None, :]).reshape(-1)
        return SphereQuadrature(radius=float(radius), normals=normals, weights=weights, degree=(n_theta, n_phi))

    @staticmethod
    def interpolate(values: np.ndarray, grid: Grid, points: np.ndarray) -> np.ndarray:
        """Tricubic spline interpolation of a (possibly multi-component) field.

        Args:
            values: Array of shape ``(*C, *grid.shape)``.
            grid: Grid of ``values``.
            points: Coordinates, shape ``(grid.dim, n)``.

        Returns:
            Array of shape ``(*C, n)``.
        """
        index = np.stack([(points[a] - grid.origin[a]) / grid.spacing[a] for a in range(grid.dim)])
        comp_shape = values.shape[: values.ndim - grid.dim]
        flat = values.reshape((-1,) + tuple(grid.shape))
        out = np.stack([map_coordinates(c, index, order=3, mode="nearest") for c in flat])
        return out.reshape(comp_shape + (points.shape[1],))

    def check_sphere(self, grid: Grid, radius: float) -> bool:
        margin = 3.0 * grid.h
        return radius + margin <= min(grid.extent)

    def decay_order(self, f: np.ndarray, grid: Grid, shells: Sequence[float]) -> DecayFit:
        """Fit max_{S_r}|f| ~ C r^p by least squares in log-log.

        Args:
            f: Scalar field on ``grid``.
            grid: 3D grid.
            shells: At least three increasing radii inside the grid.

        Returns:
            DecayFit with exponent p and the max absolute log-fit deviation.

        Raises:
            ShellOutsideGrid: A shell plus a 3h margin leaves the box.
            DegenerateFit: All shell maxima below 1e-14.
        """
        radii = [float(r) for r in shells]
        if len(radii) < 3:
            raise ValueError("decay_order needs at least three shells")
        if any(b <= a for a, b in zip(radii, radii[1:])):
            raise ValueError("Shell radii must be increasing")
        for r in radii:
            if not self.check_sphere(grid, r):
                raise ShellOutsideGrid(f"Shell r = {r} does not fit inside the grid (extent {grid.extent})")
        maxima = []
        for r in radii:
            quad = self.sphere_quadrature(r)
            maxima.append(float(np.max(np.abs(self.interpolate(f, grid, quad.points)))))
        maxima_arr = np.array(maxima)
        if np.all(maxima_arr < 1e-14):
            raise DegenerateFit("All shell maxima are below 1e-14")
        if np.any(maxima_arr <= 0):
            raise DegenerateFit("A shell maximum vanishes; cannot fit a power law")
        log_r, log_m = np.log(radii), np.log(maxima_arr)
        slope, intercept = np.polyfit(log_r, log_m, 1)
        residual = float(np.max(np.abs(slope * log_r + intercept - log_m)))
        logger.debug(f"Decay fit p = {slope:.4f} (residual {residual:.2e}) on shells {radii}")
        return DecayFit(exponent=float(slope), residual=residual, radii=radii, maxima=maxima)

    # ------------------------------------------------------------------
    # Discrete symmetries
    # ------------------------------------------------------------------

    @staticmethod
    def rotation_matrix(dim: int, plane: Tuple[int, int]) -> np.ndarray:
        """R with R e_a = e_b and R e_b = -e_a."""
        a, b = plane
        R = np.eye(dim)
        R[a, a] = R[b, b] = 0.0
        R[b, a] = 1.0
        R[a, b] = -1.0
        return R

    @classmethod
    def rotate_quarter_turn(cls, field: TensorField, plane: Tuple[int, int] = (0, 1)) -> TensorField:
        """Exact 90 degree rotation of a field on a centred grid.

        Node values move with ``np.rot90`` in the plane; components transform
        with the same orthogonal matrix in every slot.
        """
        grid = field.grid
        a, b = plane
        if grid.shape[a] != grid.shape[b] or grid.spacing[a] != grid.spacing[b]:
            raise ValueError("Quarter turns need equal node counts and spacing in the rotation plane")
        values = np.rot90(field.values, k=1, axes=(field.rank + a, field.rank + b))
        R = cls.rotation_matrix(grid.dim, plane)
        values = raise_slots(values, R, field.rank)
        return TensorField(grid, np.ascontiguousarray(values), field.covariance, field.symmetry)

    @classmethod
    def rotate_scalar(cls, values: np.ndarray, plane: Tuple[int, int] = (0, 1)) -> np.ndarray:
        return np.ascontiguousarray(np.rot90(values, k=1, axes=plane))


def frame_components(values: np.ndarray, frame: np.ndarray, rank: int) -> np.ndarray:
    """Components T(e_A, e_B, ...) for a frame of shape ``(n, d, *S)`` (frame index first)."""
    return raise_slots(values, frame, rank)

