"""Rigidity diagnostics for a solved spacetime harmonic function.

In the rigid case (data induced by Minkowski space) every quantity below
vanishes in the continuum; on non-rigid data the Hessian and Gauss residuals
stay bounded away from zero. The trace identity tr A = -J(e3) holds on all
data.

Conventions:
    - Frame: e3 = grad u / |grad u|; e1 is the g-projection of one coordinate
      axis, e2 = e3 x e1 with the g-volume form.
    - Gauss tensor: G_ijkl = R_ijkl + k_ik k_jl - k_il k_jk (R_1212 > 0 on
      spheres); it vanishes iff the Gauss equation of a slice of Minkowski holds.
    - Codazzi tensor: C_ijk = nabla_i k_jk - nabla_j k_ik.
"""
import itertools
import logging
from typing import Dict, Iterable, List, Optional

import numpy as np
from scipy.ndimage import map_coordinates, spline_filter

from src.core.concurrency import ordered_map
from src.core.exceptions import GradientTooSmall, LevelOutOfRange, NoIntersection, NotConverged
from src.models.data import ConstraintData, CurvatureSuite, FrameField, HarmonicSolution, InitialDataSet
from src.models.grid import as_matrix_stack
from src.models.reports import ATensorReport, GaussCodazziReport, LevelSetReport, RigidityReport
from src.services.geometry_service import GeometryService, frame_components, masked_max, tensor_norm
from src.services.ids_service import ConstraintService

logger = logging.getLogger(__name__)

LEVI_CIVITA = np.zeros((3, 3, 3))
for _p, _s in (((0, 1, 2), 1), ((1, 2, 0), 1), ((2, 0, 1), 1), ((0, 2, 1), -1), ((2, 1, 0), -1), ((1, 0, 2), -1)):
    LEVI_CIVITA[_p] = _s

FALLBACK_ANGLE = np.deg2rad(25.0)
BISECTION_STEPS = 48


def orthonormal_frame(g: np.ndarray, ginv: np.ndarray, du: np.ndarray, axis) -> np.ndarray:
    """Frame (e1, e2, e3) with e3 = grad u/|grad u| and e1 built from coordinate ``axis``.

    Works on any trailing shape; ``axis`` is an int or an integer array of that shape.
    """
    grad_up = np.einsum("ij...,j...->i...", ginv, du)
    norm = np.sqrt(np.maximum(np.einsum("i...,i...->...", du, grad_up), 0.0))
    e3 = grad_up / np.maximum(norm, np.finfo(float).tiny)
    shape = du.shape[1:]
    axis = np.broadcast_to(np.asarray(axis), shape)
    basis = (np.arange(3).reshape((3,) + (1,) * len(shape)) == axis[None]).astype(float)
    proj = np.einsum("ij...,i...,j...->...", g, basis, e3)
    v = basis - proj * e3
    e1 = v / np.sqrt(np.einsum("ij...,i...,j...->...", g, v, v))
    volume = np.sqrt(np.linalg.det(as_matrix_stack(g)))
    lowered = volume * np.einsum("lmn,m...,n...->l...", LEVI_CIVITA, e3, e1)
    e2 = np.einsum("il...,l...->i...", ginv, lowered)
    return np.stack([e1, e2, e3])


def axis_alignment(g: np.ndarray, du: np.ndarray, grad_norm: np.ndarray) -> np.ndarray:
    """|g(d_j, e3)| / sqrt(g_jj) per axis j, shape ``(3, *S)``."""
    diag = np.stack([g[j, j] for j in range(3)])
    return np.abs(du) / (np.maximum(grad_norm, np.finfo(float).tiny) * np.sqrt(diag))


class RigidityService:
    """Corollary-type identities, level-set flatness, A-tensor and Gauss-Codazzi checks."""

    def __init__(self, geometry: Optional[GeometryService] = None,
                 constraints: Optional[ConstraintService] = None):
        self.geometry = geometry or GeometryService()
        self.constraints = constraints or ConstraintService(self.geometry)

    def _mask(self, ids: InitialDataSet) -> np.ndarray:
        return ids.interior_mask(self.geometry.boundary_layer)

    # ------------------------------------------------------------------
    # Frame
    # ------------------------------------------------------------------

    def adapted_frame(self, ids: InitialDataSet, sol: HarmonicSolution) -> FrameField:
        """Orthonormal frame adapted to grad u.

        One coordinate axis is chosen for the whole grid: the one whose largest
        interior alignment |g(d_j, e3)|/sqrt(g_jj) is smallest (lowest index on
        ties). Nodes where that axis lies within 25 degrees of e3 fall back to
        their own least-aligned axis.

        Raises:
            GradientTooSmall: min interior |grad u| <= 10 eps_reg.
        """
        mask = self._mask(ids)
        min_grad = float(np.min(sol.grad_norm[mask]))
        if min_grad <= 10.0 * sol.eps_reg:
            raise GradientTooSmall(f"min |grad u| = {min_grad:.3e} <= 10 eps_reg")
        g = ids.g.values
        align = axis_alignment(g, sol.grad, sol.grad_norm)
        worst = [float(np.max(align[j][mask])) for j in range(3)]
        axis = int(np.argmin(worst))
        per_node = np.full(ids.grid.shape, axis)
        fallback = align[axis] > np.cos(FALLBACK_ANGLE)
        if np.any(fallback & mask):
            logger.debug(f"Frame axis {axis} fallback at {int(np.count_nonzero(fallback & mask))} nodes")
        per_node[fallback] = np.argmin(align, axis=0)[fallback]
        vectors = orthonormal_frame(g, ids.g.inverse, sol.grad, per_node)
        gram = np.einsum("ij...,ai...,bj...->ab...", g, vectors, vectors)
        defect = np.abs(gram - np.eye(3).reshape((3, 3) + (1,) * ids.grid.dim))
        residual = float(np.max(defect.reshape(9, -1)[:, mask.reshape(-1)]))
        return FrameField(vectors=vectors, axis=axis, orthonormality_residual=residual)

    def frame_rotation(self, ids: InitialDataSet, frame: FrameField) -> float:
        """Largest angle between a frame vector and its value at a neighbouring node."""
        g = ids.g.values
        mask = self._mask(ids)
        worst = 0.0
        for i in range(3):
            n = ids.grid.shape[i]
            a = [slice(None)] * ids.grid.dim
            b = [slice(None)] * ids.grid.dim
            a[i], b[i] = slice(0, n - 1), slice(1, n)
            pair_mask = mask[tuple(a)] & mask[tuple(b)]
            for e in frame.vectors:
                ea = e[(slice(None),) + tuple(a)]
                eb = e[(slice(None),) + tuple(b)]
                dot = np.einsum("ij...,i...,j...->...", g[(slice(None), slice(None)) + tuple(a)], ea, eb)
                angle = np.arccos(np.clip(dot, -1.0, 1.0))
                if np.any(pair_mask):
                    worst = max(worst, float(np.max(angle[pair_mask])))
        return worst

    # ------------------------------------------------------------------
    # Hessian and energy identities
    # ------------------------------------------------------------------

    def rigidity_residuals(self, ids: InitialDataSet, sol: HarmonicSolution, frame: Optional[FrameField] = None,
                           constraints: Optional[ConstraintData] = None) -> RigidityReport:
        """Hess u + k|grad u| and mu|grad u| + <J, grad u> over the interior.

        When a frame is given its node-to-node rotation is reported as well.

        Raises:
            NotConverged: ``sol`` did not converge.
        """
        if not sol.converged:
            raise NotConverged("rigidity_residuals needs a converged harmonic solution")
        mask = self._mask(ids)
        g = ids.g
        constraints = constraints or self.constraints.constraint_data(ids)
        residual = sol.hess.values + ids.k.values * sol.grad_norm
        pointwise = tensor_norm(residual, g.inverse, 2)
        weight = g.volume_density * ids.grid.cell_volume
        l2 = float(np.sqrt(np.sum((pointwise ** 2 * weight)[mask])))
        energy = constraints.mu * sol.grad_norm + np.einsum(
            "ij...,i...,j...->...", g.inverse, constraints.J.values, sol.grad
        )
        report = RigidityReport(
            hess_residual=masked_max(pointwise, mask),
            hess_residual_l2=l2,
            energy_residual=masked_max(np.abs(energy), mask),
            frame_rotation=self.frame_rotation(ids, frame) if frame is not None else None,
        )
        logger.info(f"Rigidity residuals: hess={report.hess_residual:.3e}, energy={report.energy_residual:.3e}")
        return report

    # ------------------------------------------------------------------
    # Level sets
    # ------------------------------------------------------------------

    def _crossings(self, ids: InitialDataSet, u: np.ndarray, t: float, mask: np.ndarray) -> np.ndarray:
        """Points on {u = t} found by bisection along every grid edge with a sign change."""
        grid = ids.grid
        coeffs = _spline(u)
        starts, directions = [], []
        for i in range(grid.dim):
            n = grid.shape[i]
            lo = [slice(None)] * grid.dim
            hi = [slice(None)] * grid.dim
            lo[i], hi[i] = slice(0, n - 1), slice(1, n)
            above_lo = u[tuple(lo)] >= t
            above_hi = u[tuple(hi)] >= t
            hit = (above_lo != above_hi) & mask[tuple(lo)] & mask[tuple(hi)]
            idx = np.argwhere(hit)
            if idx.size:
                starts.append(idx.astype(float))
                step = np.zeros_like(idx, dtype=float)
                step[:, i] = 1.0
                directions.append(step)
        if not starts:
            raise NoIntersection(f"No grid edge crosses the level u = {t}")
        start = np.concatenate(starts)
        step = np.concatenate(directions)
        left = np.zeros(len(start))
        right = np.ones(len(start))
        f_left = _evaluate(coeffs, start.T) - t
        for _ in range(BISECTION_STEPS):
            mid = 0.5 * (left + right)
            f_mid = _evaluate(coeffs, (start + mid[:, None] * step).T) - t
            same = np.sign(f_mid) == np.sign(f_left)
            left = np.where(same, mid, left)
            f_left = np.where(same, f_mid, f_left)
            right = np.where(same, right, mid)
        return (start + 0.5 * (left + right)[:, None] * step).T

    def level_set_report(self, ids: InitialDataSet, sol: HarmonicSolution, levels: Iterable[float],
                         curvature: Optional[CurvatureSuite] = None) -> List[LevelSetReport]:
        """Sample K, H and h + k|_Sigma on level sets {u = t}.

        Points are located by bisection of the spline-interpolated u along grid
        edges; at each point 2K = R - 2 Ric(nu, nu) + H^2 - |h|^2 with
        h_ab = Hess u(e_a, e_b)/|grad u| for the tangential frame vectors.

        Raises:
            LevelOutOfRange: t outside the interior range of u.
            NoIntersection: No edge crosses the level.
        """
        grid = ids.grid
        mask = self._mask(ids)
        u = sol.u
        lo, hi = float(np.min(u[mask])), float(np.max(u[mask]))
        curvature = curvature or self.geometry.curvature_suite(ids.g, mask=mask, keep_riemann=False)
        fields = {
            "g": ids.g.values,
            "k": ids.k.values,
            "du": sol.grad,
            "hess": sol.hess.values,
            "ricci": curvature.ricci.values,
            "scalar": curvature.scalar,
        }
        splines = {name: _spline_components(v, grid.dim) for name, v in fields.items()}

        def one_level(t: float) -> LevelSetReport:
            if not lo < t < hi:
                raise LevelOutOfRange(f"Level {t} outside the interior range ({lo:.4f}, {hi:.4f}) of u")
            index_points = self._crossings(ids, u, t, mask)
            at = {name: _evaluate_components(s, index_points) for name, s in splines.items()}
            g = at["g"]
            ginv = np.moveaxis(np.linalg.inv(np.moveaxis(g, (0, 1), (-2, -1))), (-2, -1), (0, 1))
            grad_norm = np.sqrt(np.einsum("ij...,i...,j...->...", ginv, at["du"], at["du"]))
            align = axis_alignment(g, at["du"], grad_norm)
            frame = orthonormal_frame(g, ginv, at["du"], np.argmin(align, axis=0))
            h = frame_components(at["hess"], frame[:2], 2) / grad_norm
            k_t = frame_components(at["k"], frame[:2], 2)
            nu = frame[2]
            ric_nn = np.einsum("ij...,i...,j...->...", at["ricci"], nu, nu)
            H = h[0, 0] + h[1, 1]
            h_sq = np.sum(h ** 2, axis=(0, 1))
            K = 0.5 * (at["scalar"] - 2.0 * ric_nn + H ** 2 - h_sq)
            h_plus_k = np.sqrt(np.sum((h + k_t) ** 2, axis=(0, 1)))
            points = np.stack([grid.origin[a] + grid.spacing[a] * index_points[a] for a in range(grid.dim)])
            report = LevelSetReport(
                level=float(t),
                num_points=int(points.shape[1]),
                max_K=float(np.max(np.abs(K))),
                max_H=float(np.max(np.abs(H))),
                max_h_plus_k=float(np.max(h_plus_k)),
                points=points,
                K=K,
                H=H,
                h_norm2=h_sq,
                h_plus_k=h_plus_k,
            )
            logger.info(f"Level u={t}: {report.num_points} points, max|K|={report.max_K:.3e}")
            return report

        return ordered_map(one_level, list(levels))

    # ------------------------------------------------------------------
    # A-tensor and Gauss-Codazzi
    # ------------------------------------------------------------------

    def gauss_tensor(self, ids: InitialDataSet, curvature: CurvatureSuite) -> np.ndarray:
        k = ids.k.values
        return (
            curvature.riemann.values
            + np.einsum("ik...,jl...->ijkl...", k, k)
            - np.einsum("il...,jk...->ijkl...", k, k)
        )

    def a_tensor_report(self, ids: InitialDataSet, sol: HarmonicSolution, frame: FrameField,
                        constraints: Optional[ConstraintData] = None,
                        curvature: Optional[CurvatureSuite] = None) -> ATensorReport:
        """A_ab = nabla k(e3; e_a, e_b) - nabla k(e_a; e_b, e3) and the trace identity.

        Also reports Gauss-tensor components in the adapted frame.

        Raises:
            GradientTooSmall: min interior |grad u| <= 10 eps_reg.
        """
        mask = self._mask(ids)
        if float(np.min(sol.grad_norm[mask])) <= 10.0 * sol.eps_reg:
            raise GradientTooSmall("Frame undefined where |grad u| vanishes")
        constraints = constraints or self.constraints.constraint_data(ids)
        curvature = curvature or self.geometry.curvature_suite(ids.g, mask=mask)
        nabla_k = self.geometry.covariant_derivative(ids.k, ids.g)
        D = frame_components(nabla_k, frame.vectors, 3)
        A = D[2, :2, :2] - D[:2, :2, 2]
        trace = A[0, 0] + A[1, 1]
        J_e3 = np.einsum("i...,i...->...", constraints.J.values, frame.e3)
        A_norm = np.sqrt(np.sum(A ** 2, axis=(0, 1)))

        G = frame_components(self.gauss_tensor(ids, curvature), frame.vectors, 4)
        g1212 = np.abs(G[0, 1, 0, 1])
        gab3a = np.max(np.abs(np.stack([G[a, b, 2, a] for a in range(2) for b in range(2)])), axis=0)
        ga33b = np.max(np.abs(np.stack([G[a, 2, 2, b] for a in range(2) for b in range(2)])), axis=0)
        report = ATensorReport(
            max_A=masked_max(A_norm, mask),
            trace_identity=masked_max(np.abs(trace + J_e3), mask),
            gauss_1212=masked_max(g1212, mask),
            gauss_ab3a=masked_max(gab3a, mask),
            gauss_a33b=masked_max(ga33b, mask),
            A=A,
        )
        logger.info(f"A-tensor: max|A|={report.max_A:.3e}, trace identity {report.trace_identity:.3e}")
        return report

    def gauss_codazzi_residuals(self, ids: InitialDataSet, frame: Optional[FrameField] = None,
                                curvature: Optional[CurvatureSuite] = None) -> GaussCodazziReport:
        """Frame-invariant max norms of the Gauss and Codazzi tensors.

        With a frame, every independent Codazzi component C(e_A, e_B, e_C), A < B,
        is reported separately as ``C_ABC`` (1-based).
        """
        mask = self._mask(ids)
        g = ids.g
        curvature = curvature or self.geometry.curvature_suite(g, mask=mask)
        gauss = self.gauss_tensor(ids, curvature)
        nabla_k = self.geometry.covariant_derivative(ids.k, g)
        codazzi = nabla_k - np.einsum("jik...->ijk...", nabla_k)
        frame_codazzi: Dict[str, float] = {}
        if frame is not None:
            C = frame_components(codazzi, frame.vectors, 3)
            for a, b in itertools.combinations(range(3), 2):
                for c in range(3):
                    frame_codazzi[f"C_{a + 1}{b + 1}{c + 1}"] = masked_max(np.abs(C[a, b, c]), mask)
        report = GaussCodazziReport(
            gauss_residual=masked_max(tensor_norm(gauss, g.inverse, 4), mask),
            codazzi_residual=masked_max(tensor_norm(codazzi, g.inverse, 3), mask),
            frame_codazzi=frame_codazzi,
            gauss=gauss,
            codazzi=codazzi,
        )
        logger.info(f"Gauss residual {report.gauss_residual:.3e}, Codazzi residual {report.codazzi_residual:.3e}")
        return report

    # ------------------------------------------------------------------
    # Full report
    # ------------------------------------------------------------------

    def rigidity_report(self, ids: InitialDataSet, sol: HarmonicSolution, levels: Iterable[float],
                        constraints: Optional[ConstraintData] = None):
        """Every rigidity diagnostic; returns (RigidityReport, level reports, A report, GC report)."""
        mask = self._mask(ids)
        constraints = constraints or self.constraints.constraint_data(ids)
        curvature = self.geometry.curvature_suite(ids.g, mask=mask)
        frame = self.adapted_frame(ids, sol)
        report = self.rigidity_residuals(ids, sol, frame, constraints)
        level_reports = self.level_set_report(ids, sol, levels, curvature)
        a_report = self.a_tensor_report(ids, sol, frame, constraints, curvature)
        gc_report = self.gauss_codazzi_residuals(ids, frame, curvature)
        report = report.model_copy(
            update={
                "level_set_K": {f"{r.level:g}": r.max_K for r in level_reports},
                "h_plus_k": max(r.max_h_plus_k for r in level_reports),
                "A_norm": a_report.max_A,
                "trace_identity": a_report.trace_identity,
                "gauss_residual": gc_report.gauss_residual,
                "codazzi_residual": gc_report.codazzi_residual,
            }
        )
        return report, level_reports, a_report, gc_report


def _spline(values: np.ndarray) -> np.ndarray:
    return spline_filter(values, order=3, mode="nearest")


def _evaluate(coeffs: np.ndarray, index_points: np.ndarray) -> np.ndarray:
    return map_coordinates(coeffs, index_points, order=3, mode="nearest", prefilter=False)


def _spline_components(values: np.ndarray, dim: int) -> np.ndarray:
    comp_shape = values.shape[: values.ndim - dim]
    flat = values.reshape((-1,) + values.shape[values.ndim - dim:])
    return np.stack([_spline(c) for c in flat]).reshape(comp_shape + flat.shape[1:])


def _evaluate_components(coeffs: np.ndarray, index_points: np.ndarray) -> np.ndarray:
    dim = index_points.shape[0]
    comp_shape = coeffs.shape[: coeffs.ndim - dim]
    flat = coeffs.reshape((-1,) + coeffs.shape[coeffs.ndim - dim:])
    out = np.stack([_evaluate(c, index_points) for c in flat])
    return out.reshape(comp_shape + (index_points.shape[1],))
