"""
Input specifications: slice oracles, solver parameters and closed-form
function specs for pp-wave metrics.

Function specs use a small catalog that is closed under differentiation::

    f(u, x1, x2) = sum_k  c_k * u^p0 * x1^p1 * x2^p2 * factor_k

with ``factor`` one of ``1``, ``sin(omega . (u, x1, x2) + phase)``,
``cos(omega . (u, x1, x2) + phase)`` or ``exp(-(w_u u^2 + w_1 x1^2 + w_2 x2^2))``.
Because derivatives stay in the catalog, any number of exact derivatives is
available symbolically, on top of the hyper-dual value/gradient/Hessian.
"""
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.core.autodiff import HyperDual
from src.models.grid import Grid

Vector3 = Tuple[float, float, float]


class SliceSpec(BaseModel):
    """Oracle initial-data description.

    Attributes:
        kind: ``flat``, ``graph``, ``boosted_graph`` or ``schwarzschild``.
        amplitude: Graph bump amplitude c.
        width: Graph bump width w.
        boost: Linear part v of the graph function (|v| < 1).
        mass: Schwarzschild mass m.
        excision_radius: Schwarzschild excision radius; defaults to m.
        mask_radius: Diagnostics skip |x| <= mask_radius at every resolution.
        grid: Grid the data is generated on; filled in by the scenario runner.
    """

    kind: Literal["flat", "graph", "boosted_graph", "schwarzschild"] = "flat"
    amplitude: float = 0.0
    width: float = Field(default=1.0, gt=0)
    boost: Vector3 = (0.0, 0.0, 0.0)
    mass: float = Field(default=1.0, gt=0)
    excision_radius: Optional[float] = None
    mask_radius: Optional[float] = Field(default=None, gt=0)
    grid: Optional[Grid] = None

    @field_validator("boost")
    @classmethod
    def _subluminal(cls, v: Vector3) -> Vector3:
        if float(np.linalg.norm(v)) >= 1.0:
            raise ValueError(f"Boost vector must satisfy |v| < 1, got {v}")
        return v

    def with_grid(self, grid: Grid) -> "SliceSpec":
        return self.model_copy(update={"grid": grid})


class SolverParams(BaseModel):
    """Spacetime harmonic solver controls.

    ``eps_reg`` defaults to h^2 of the grid being solved on.
    """

    direction: Vector3 = (1.0, 0.0, 0.0)
    picard_tol: float = Field(default=1e-8, gt=0)
    picard_max: int = Field(default=50, ge=1)
    linear_tol: float = Field(default=1e-12, gt=0)
    linear_max: int = Field(default=20000, ge=1)
    eps_reg: Optional[float] = Field(default=None, gt=0)

    @field_validator("direction")
    @classmethod
    def _unit(cls, a: Vector3) -> Vector3:
        norm = float(np.linalg.norm(a))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"Direction must be a unit vector, |a| = {norm}")
        return tuple(float(c) / norm for c in a)


class Factor(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["sin", "cos", "exp"]
    omega: Vector3 = (0.0, 0.0, 0.0)
    phase: float = 0.0


class Term(BaseModel):
    """coeff * u^p0 * x1^p1 * x2^p2 * factor."""

    model_config = ConfigDict(frozen=True)

    coeff: float = 1.0
    powers: Tuple[int, int, int] = (0, 0, 0)
    factor: Optional[Factor] = None

    @field_validator("powers")
    @classmethod
    def _non_negative(cls, p):
        if any(q < 0 for q in p):
            raise ValueError("Monomial powers must be non-negative")
        return p

    def _evaluate(self, x, power, sin, cos, exp, one):
        value = one * self.coeff
        for var, p in zip(x, self.powers):
            if p:
                value = value * power(var, p)
        if self.factor is None:
            return value
        w = self.factor.omega
        if self.factor.kind == "exp":
            arg = -(w[0] * x[0] * x[0] + w[1] * x[1] * x[1] + w[2] * x[2] * x[2])
            return value * exp(arg)
        arg = w[0] * x[0] + w[1] * x[1] + w[2] * x[2] + self.factor.phase
        return value * (sin(arg) if self.factor.kind == "sin" else cos(arg))

    def derivative(self, i: int) -> List["Term"]:
        out = []
        p = self.powers[i]
        if p:
            powers = list(self.powers)
            powers[i] -= 1
            out.append(Term(coeff=self.coeff * p, powers=tuple(powers), factor=self.factor))
        f = self.factor
        if f is not None and f.omega[i] != 0.0:
            if f.kind == "exp":
                powers = list(self.powers)
                powers[i] += 1
                out.append(Term(coeff=-2.0 * f.omega[i] * self.coeff, powers=tuple(powers), factor=f))
            elif f.kind == "sin":
                out.append(Term(coeff=f.omega[i] * self.coeff, powers=self.powers, factor=f.model_copy(update={"kind": "cos"})))
            else:
                out.append(Term(coeff=-f.omega[i] * self.coeff, powers=self.powers, factor=f.model_copy(update={"kind": "sin"})))
        return out


class FunctionSpec(BaseModel):
    """Closed-form function of (u, x1, x2) from the term catalog."""

    model_config = ConfigDict(frozen=True)

    terms: List[Term] = Field(default_factory=list)

    @classmethod
    def constant(cls, c: float) -> "FunctionSpec":
        return cls(terms=[Term(coeff=c)])

    @classmethod
    def monomial(cls, coeff: float, powers: Tuple[int, int, int], factor: Optional[Factor] = None) -> "FunctionSpec":
        return cls(terms=[Term(coeff=coeff, powers=powers, factor=factor)])

    def __add__(self, other: "FunctionSpec") -> "FunctionSpec":
        return FunctionSpec(terms=list(self.terms) + list(other.terms))

    def scaled(self, c: float) -> "FunctionSpec":
        return FunctionSpec(terms=[t.model_copy(update={"coeff": c * t.coeff}) for t in self.terms])

    def times_monomial(self, powers: Tuple[int, int, int]) -> "FunctionSpec":
        return FunctionSpec(
            terms=[
                t.model_copy(update={"powers": tuple(p + q for p, q in zip(t.powers, powers))})
                for t in self.terms
            ]
        )

    def derivative(self, *indices: int) -> "FunctionSpec":
        """Exact partial derivative; ``indices`` refer to (u, x1, x2) = (0, 1, 2)."""
        spec = self
        for i in indices:
            spec = FunctionSpec(terms=[d for t in spec.terms for d in t.derivative(i)])
        return spec

    def depends_only_on_u(self) -> bool:
        for t in self.terms:
            if t.powers[1] or t.powers[2]:
                return False
            if t.factor is not None and (t.factor.omega[1] or t.factor.omega[2]):
                return False
        return True

    def evaluate(self, u: np.ndarray, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        shape = np.broadcast(u, x1, x2).shape
        total = np.zeros(shape)
        for t in self.terms:
            total = total + t._evaluate(
                (u, x1, x2), np.power, np.sin, np.cos, np.exp, np.ones(shape)
            )
        return total

    def evaluate_dual(self, x: List[HyperDual]) -> HyperDual:
        """Value, gradient and Hessian with respect to the seeded variables ``x``."""
        shape = np.shape(x[0].val)
        total = HyperDual.constant(0.0, x[0].nvars, shape)
        one = HyperDual.constant(1.0, x[0].nvars, shape)
        for t in self.terms:
            total = total + t._evaluate(
                x, lambda v, p: v ** p, lambda a: a.sin(), lambda a: a.cos(), lambda a: a.exp(), one
            )
        return total


class PPWaveSpec(BaseModel):
    """pp-wave data: (a, b, lapse) or the solved form (psi, l, lapse).

    In solved form ``a = x2 psi(u) + l_x1`` and ``b = -x1 psi(u) + l_x2``;
    ``lapse`` is the |grad u|^-2 function.
    """

    a: Optional[FunctionSpec] = None
    b: Optional[FunctionSpec] = None
    psi: Optional[FunctionSpec] = None
    l: Optional[FunctionSpec] = None
    lapse: FunctionSpec = Field(default_factory=lambda: FunctionSpec.constant(1.0))

    @model_validator(mode="after")
    def _one_form(self) -> "PPWaveSpec":
        explicit = self.a is not None or self.b is not None
        solved = self.psi is not None or self.l is not None
        if explicit and solved:
            raise ValueError("Give either (a, b) or (psi, l), not both")
        if self.psi is not None and not self.psi.depends_only_on_u():
            raise ValueError("psi must depend on u only")
        return self

    @property
    def solved_form(self) -> bool:
        return self.psi is not None or self.l is not None

    def resolved(self) -> Tuple[FunctionSpec, FunctionSpec]:
        """The (a, b) pair, expanding the solved form when given."""
        if not self.solved_form:
            return self.a or FunctionSpec(), self.b or FunctionSpec()
        psi = self.psi or FunctionSpec()
        l = self.l or FunctionSpec()
        a = psi.times_monomial((0, 0, 1)) + l.derivative(1)
        b = psi.times_monomial((0, 1, 0)).scaled(-1.0) + l.derivative(2)
        return a, b
