"""
Array-carrying domain objects passed between services.

These are frozen dataclasses rather than pydantic models because they hold
numpy arrays; specs, parameters and reports live in ``specs``/``reports``.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.models.grid import Grid, MetricField, TensorField


@dataclass(frozen=True)
class InitialDataSet:
    """Triple (grid, g, k) plus asymptotic metadata.

    Attributes:
        g: Riemannian metric on a 3D grid.
        k: Symmetric down-down rank-2 field.
        tau: Claimed decay rate (> 1/2).
        provenance: Label of the generating oracle or input file.
        excision_radius: Radius of a ball around the origin that is not data.
        mask_radius: Diagnostics ignore |x| <= mask_radius at every resolution.
    """

    g: MetricField
    k: TensorField
    tau: float
    provenance: str
    excision_radius: Optional[float] = None
    mask_radius: Optional[float] = None

    def __post_init__(self):
        if self.g.grid.dim != 3:
            raise ValueError("Initial data sets live on 3D grids")
        if not self.g.is_riemannian:
            raise ValueError("Initial data metric must be Riemannian")
        if self.k.grid != self.g.grid or self.k.rank != 2 or (0, 1) not in self.k.symmetry:
            raise ValueError("k must be a symmetric rank-2 field on the metric's grid")
        if self.tau <= 0.5:
            raise ValueError(f"Decay rate tau must exceed 1/2, got {self.tau}")

    @property
    def grid(self) -> Grid:
        return self.g.grid

    def interior_mask(self, layer: Optional[int] = None) -> np.ndarray:
        return self.grid.interior_mask(layer, self.excision_radius, self.mask_radius)


@dataclass(frozen=True)
class ConstraintData:
    """Energy and momentum densities of an initial data set."""

    mu: np.ndarray
    J: TensorField
    J_norm: np.ndarray
    dec_margin: np.ndarray
    trace_k: np.ndarray
    dec_satisfied: bool
    dec_tolerance: float


@dataclass(frozen=True)
class CurvatureSuite:
    """Curvature of a metric plus symmetry diagnostics.

    ``riemann`` is the lowered tensor R_abcd (R_1212 > 0 on round spheres),
    projected so that its algebraic symmetries hold to round-off;
    ``raw_residuals`` are the same symmetry checks before the projection.
    """

    riemann: Optional[TensorField]
    ricci: TensorField
    scalar: np.ndarray
    riemann_norm: np.ndarray
    max_riemann_norm: float
    residuals: Dict[str, float]
    raw_residuals: Dict[str, float]


@dataclass(frozen=True)
class HessianResult:
    hess: TensorField
    lap: np.ndarray
    grad_norm: np.ndarray
    grad: np.ndarray


@dataclass(frozen=True)
class SphereQuadrature:
    """Product Gauss-Legendre (cos theta) x trapezoid (phi) rule on S_r.

    Attributes:
        radius: Sphere radius r.
        normals: Unit vectors, shape ``(3, n)``.
        weights: Solid-angle weights summing to 4 pi.
        degree: (n_theta, n_phi).
    """

    radius: float
    normals: np.ndarray
    weights: np.ndarray
    degree: Tuple[int, int]

    @property
    def points(self) -> np.ndarray:
        return self.radius * self.normals


@dataclass
class PicardRecord:
    iteration: int
    residual: float
    inner_iterations: int
    halvings: int


@dataclass(frozen=True)
class HarmonicSolution:
    """Spacetime harmonic function with derivatives and solver history."""

    u: np.ndarray
    grad: np.ndarray
    grad_norm: np.ndarray
    hess: TensorField
    iterations: int
    final_residual: float
    converged: bool
    min_grad_norm: float
    eps_reg: float
    history: List[PicardRecord] = field(default_factory=list)


@dataclass(frozen=True)
class FrameField:
    """Orthonormal frame e_1, e_2, e_3 with e_3 = grad u / |grad u|.

    ``vectors`` has shape ``(3, 3, *S)``: frame index first, coordinate index second.
    """

    vectors: np.ndarray
    axis: int
    orthonormality_residual: float

    @property
    def e1(self) -> np.ndarray:
        return self.vectors[0]

    @property
    def e2(self) -> np.ndarray:
        return self.vectors[1]

    @property
    def e3(self) -> np.ndarray:
        return self.vectors[2]


@dataclass(frozen=True)
class DevelopmentResult:
    """Gaussian development gbar = -dt^2 + g_t on [-eps, eps] x grid.

    ``final`` holds g at t = -eps and t = +eps, shape ``(3, 3, *S)`` each;
    ``max_dg_dt`` has one entry per time in ``times``.
    """

    grid: Grid
    times: np.ndarray
    final: Tuple[np.ndarray, np.ndarray]
    max_dg_dt: np.ndarray
    flatness: float
    window_flatness: Dict[float, float]
    consistency: float
    integration_error: float
    restriction_residual: float
    initial_slice_residual: float
    time_symmetry_residual: Optional[float]


@dataclass(frozen=True)
class KillingDevelopment:
    """Killing development gtilde = 2 dtau du + g on a thin tau slab.

    ``normal`` holds the unit normal -grad tau / sqrt(-g^tautau) of the tau = 0
    slice, shape ``(4, *S)``.
    """

    gtilde: MetricField
    null_hessian: float
    max_riemann_norm: float
    scalar_curvature: float
    null_norm_residual: float
    slice_extrinsic_residual: float
    normal: np.ndarray
