"""
Report models emitted by the services.

Scalar diagnostics are plain fields and serialize to JSON; gridded or
per-sample arrays ride along as excluded fields for the CSV writers and tests.
"""
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class ArrayCarrier(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)


class ConstraintReport(BaseModel):
    max_mu: float
    max_J: float
    min_dec_margin: float
    dec_tolerance: float
    dec_satisfied: bool


class CurvatureReport(BaseModel):
    max_riemann_norm: float
    max_scalar: float
    residuals: Dict[str, float]
    raw_residuals: Dict[str, float]


class DecayFit(BaseModel):
    """Power-law fit max_{S_r}|f| ~ C r^p."""

    exponent: float
    residual: float
    radii: List[float]
    maxima: List[float]


class ChargeReport(BaseModel):
    """ADM energy and linear momentum from coordinate-sphere fluxes.

    Attributes:
        radii: Sphere radii, strictly increasing.
        energies: E(r) per radius.
        momenta: P(r) per radius.
        energy: Extrapolated E.
        momentum: Extrapolated P.
        momentum_norm: Euclidean |P|.
        residual: Extrapolation residual.
        decay_rate: Exponent q of the Richardson model.
        richardson_terms: Number of r^{-nq} correction terms.
    """

    radii: List[float]
    energies: List[float]
    momenta: List[List[float]]
    energy: float
    momentum: List[float]
    momentum_norm: float = 0.0
    residual: float
    decay_rate: float
    richardson_terms: int
    integrability_caveat: str = (
        "Decay of mu and J is checked on a finite grid only; integrability at infinity is assumed."
    )

    @model_validator(mode="after")
    def _consistent(self) -> "ChargeReport":
        if any(b <= a for a, b in zip(self.radii, self.radii[1:])):
            raise ValueError("Radii must be strictly increasing")
        self.momentum_norm = float(np.linalg.norm(self.momentum))
        return self


class HkkReport(ArrayCarrier):
    """Both sides of the mass inequality integral formula."""

    lhs: float
    rhs: float
    slack: float
    hessian_term: float
    mu_term: float
    j_term: float
    min_integrand: float
    truncation_radius: float
    integrand: Optional[np.ndarray] = Field(default=None, exclude=True, repr=False)


class LevelSetReport(ArrayCarrier):
    """Extrinsic curvature samples on one level set {u = t}."""

    level: float
    num_points: int
    max_K: float
    max_H: float
    max_h_plus_k: float
    points: Optional[np.ndarray] = Field(default=None, exclude=True, repr=False)
    K: Optional[np.ndarray] = Field(default=None, exclude=True, repr=False)
    H: Optional[np.ndarray] = Field(default=None, exclude=True, repr=False)
    h_norm2: Optional[np.ndarray] = Field(default=None, exclude=True, repr=False)
    h_plus_k: Optional[np.ndarray] = Field(default=None, exclude=True, repr=False)


class ATensorReport(ArrayCarrier):
    max_A: float
    trace_identity: float
    gauss_1212: float
    gauss_ab3a: float
    gauss_a33b: float
    A: Optional[np.ndarray] = Field(default=None, exclude=True, repr=False)


class GaussCodazziReport(ArrayCarrier):
    gauss_residual: float
    codazzi_residual: float
    frame_codazzi: Dict[str, float] = Field(default_factory=dict)
    gauss: Optional[np.ndarray] = Field(default=None, exclude=True, repr=False)
    codazzi: Optional[np.ndarray] = Field(default=None, exclude=True, repr=False)


class RigidityReport(BaseModel):
    """Every rigidity diagnostic over the grid interior.

    ``None`` marks parts that were not computed.
    """

    hess_residual: float
    hess_residual_l2: float
    energy_residual: float
    level_set_K: Dict[str, float] = Field(default_factory=dict)
    h_plus_k: Optional[float] = None
    A_norm: Optional[float] = None
    trace_identity: Optional[float] = None
    gauss_residual: Optional[float] = None
    codazzi_residual: Optional[float] = None
    frame_rotation: Optional[float] = None

    @property
    def max_level_K(self) -> Optional[float]:
        return max(self.level_set_K.values()) if self.level_set_K else None


class DevelopmentReport(BaseModel):
    eps: float
    steps: int
    flatness: float
    window_flatness: Dict[str, float]
    max_dg_dt: float
    consistency: float
    integration_error: float
    restriction_residual: float
    initial_slice_residual: float
    time_symmetry_residual: Optional[float] = None


class KillingReport(BaseModel):
    null_hessian: float
    max_riemann_norm: float
    scalar_curvature: float
    null_norm_residual: float
    slice_extrinsic_residual: float


class PPWaveReport(BaseModel):
    """Numeric pp-wave curvature against its closed forms."""

    ricci_u1: float
    ricci_u2: float
    ricci_uu: float
    off_list: List[str]
    off_list_max: float
    off_list_threshold: float
    scalar_curvature: float
    max_riemann_norm: float
    solved_form: bool
    riemann_F: Optional[float] = None
    ricci_uu_laplacian_F: Optional[float] = None
    max_laplacian_F: Optional[float] = None
    superharmonic: Optional[bool] = None
    normal_mu: Optional[float] = None
    normal_J: Optional[float] = None
    normal_vector: Optional[float] = None
    tangential_J: Optional[float] = None
