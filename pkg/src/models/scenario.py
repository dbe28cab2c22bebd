"""
Scenario configuration and convergence-table models.

A scenario file is TOML; ``src.services.scenario_service.load_config`` parses
it and validates the mapping into ``ScenarioConfig``.

Example:
    ```toml
    name = "graph_rigidity"
    checks = ["constraints", "adm", "harmonic", "rigidity"]
    radii = [3.0, 3.5, 4.0]

    [slice]
    kind = "graph"
    amplitude = 0.1

    [grid]
    half_width = 6.0
    resolution = 48

    [thresholds.hess_residual]
    upper = 20.0
    scale = "h2"
    ```
"""
from pathlib import Path
from typing import Dict, List, Literal, Optional

import pandas as pd
from pydantic import BaseModel, Field, field_validator, model_validator

from src.models.grid import Grid
from src.models.specs import PPWaveSpec, SliceSpec, SolverParams

Check = Literal["constraints", "adm", "harmonic", "rigidity", "gaussian_dev", "killing_dev", "ppwave"]

CHECK_ORDER: List[str] = ["constraints", "adm", "harmonic", "rigidity", "gaussian_dev", "killing_dev", "ppwave"]

PREREQUISITES: Dict[str, List[str]] = {
    "rigidity": ["harmonic"],
    "killing_dev": ["harmonic"],
}


class GridParams(BaseModel):
    """Centred cube [-L, L]^3 with h = L / resolution."""

    half_width: float = Field(default=6.0, gt=0)
    resolution: int = Field(default=24, ge=4)

    @property
    def h(self) -> float:
        return self.half_width / self.resolution

    def build(self, dim: int = 3) -> Grid:
        return Grid.box(dim, self.half_width, self.resolution)


class ThresholdSpec(BaseModel):
    """Acceptance band for one diagnostic; ``h2`` bounds are multiplied by h^2."""

    lower: Optional[float] = None
    upper: Optional[float] = None
    scale: Literal["abs", "h2"] = "abs"

    def bounds(self, h: float):
        factor = h * h if self.scale == "h2" else 1.0
        lo = None if self.lower is None else self.lower * factor
        hi = None if self.upper is None else self.upper * factor
        return lo, hi

    def passes(self, value: Optional[float], h: float) -> bool:
        if value is None:
            return False
        lo, hi = self.bounds(h)
        if lo is not None and value < lo:
            return False
        if hi is not None and value > hi:
            return False
        return True


class DevelopmentParams(BaseModel):
    eps: float = Field(default=0.1, gt=0)
    steps: int = Field(default=32, ge=8)
    tau_extent: Optional[float] = Field(default=None, gt=0)


class PPWaveParams(BaseModel):
    """pp-wave check: spec plus its 4D grid in (tau, u, x1, x2).

    The tau axis is thin (``tau_nodes`` nodes) because the metric is tau-independent.
    """

    spec: PPWaveSpec = Field(default_factory=PPWaveSpec)
    half_width: float = Field(default=1.0, gt=0)
    resolution: int = Field(default=12, ge=4)
    tau_nodes: int = Field(default=5, ge=5)
    assume_dec: bool = False

    @field_validator("tau_nodes")
    @classmethod
    def _odd(cls, n: int) -> int:
        if n % 2 == 0:
            raise ValueError("tau_nodes must be odd")
        return n

    def build_grid(self, resolution: Optional[int] = None) -> Grid:
        n = resolution or self.resolution
        spatial = Grid.box(3, self.half_width, n)
        return Grid.product(spatial, spatial.h, self.tau_nodes)


Verdict = Literal["pass_order", "below_floor", "non_vanishing_limit", "fail"]

PASSING_VERDICTS = ("pass_order", "below_floor")


class ConvergenceParams(BaseModel):
    """Refinement study settings.

    ``diagnostics`` restricts the table (default: every diagnostic the scenario
    emits); ``expect`` names diagnostics whose expected verdict is not a pass,
    such as the negative controls.
    """

    levels: List[int] = Field(default_factory=lambda: [24, 32, 48])
    parallel: bool = False
    diagnostics: Optional[List[str]] = None
    expect: Dict[str, Verdict] = Field(default_factory=dict)

    @field_validator("levels")
    @classmethod
    def _refining(cls, levels: List[int]) -> List[int]:
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError("Convergence levels must be strictly refining")
        return levels


class ScenarioConfig(BaseModel):
    """One verification scenario: data source, parameters, toggled checks and thresholds.

    Attributes:
        slice: Oracle data spec; mutually exclusive with ``input_path``.
        input_path: Third-party data set in the field container format.
        checks: Toggled checks; executed in dependency order.
        thresholds: Acceptance band per diagnostic name.
    """

    name: str = "scenario"
    slice: Optional[SliceSpec] = None
    input_path: Optional[Path] = None
    grid: GridParams = Field(default_factory=GridParams)
    solver: SolverParams = Field(default_factory=SolverParams)
    radii: List[float] = Field(default_factory=lambda: [4.0, 6.0, 8.0])
    levels: List[float] = Field(default_factory=lambda: [0.0])
    checks: List[Check] = Field(default_factory=lambda: ["constraints"])
    output_dir: Optional[Path] = None
    development: DevelopmentParams = Field(default_factory=DevelopmentParams)
    ppwave: Optional[PPWaveParams] = None
    thresholds: Dict[str, ThresholdSpec] = Field(default_factory=dict)
    convergence: ConvergenceParams = Field(default_factory=ConvergenceParams)

    @model_validator(mode="after")
    def _prerequisites(self) -> "ScenarioConfig":
        toggled = set(self.checks)
        for check, needs in PREREQUISITES.items():
            missing = [n for n in needs if check in toggled and n not in toggled]
            if missing:
                raise ValueError(f"Check '{check}' requires {missing} to be toggled")
        if toggled - {"ppwave"}:
            if (self.slice is None) == (self.input_path is None):
                raise ValueError("Give exactly one of [slice] or input_path for data-set checks")
        if "ppwave" in toggled and self.ppwave is None:
            raise ValueError("Check 'ppwave' requires a [ppwave] section")
        if any(b <= a for a, b in zip(sorted(self.radii), sorted(self.radii)[1:])):
            raise ValueError("Radii must be distinct")
        return self

    def ordered_checks(self) -> List[str]:
        return [c for c in CHECK_ORDER if c in self.checks]

    def at_level(self, resolution: int) -> "ScenarioConfig":
        """Copy of this scenario with the grid (and pp-wave grid) refined to ``resolution``."""
        update = {"grid": self.grid.model_copy(update={"resolution": resolution})}
        if self.ppwave is not None:
            scale = resolution / self.grid.resolution
            pp_res = max(4, int(round(self.ppwave.resolution * scale)))
            update["ppwave"] = self.ppwave.model_copy(update={"resolution": pp_res})
        return self.model_copy(update=update)


class ConvergenceRow(BaseModel):
    diagnostic: str
    resolutions: List[int]
    spacings: List[float]
    values: List[Optional[float]]
    orders: List[Optional[float]]
    verdict: Verdict


class ConvergenceTable(BaseModel):
    """Observed convergence orders per diagnostic across refinement levels."""

    scenario: str
    rows: List[ConvergenceRow] = Field(default_factory=list)

    def row(self, diagnostic: str) -> ConvergenceRow:
        for r in self.rows:
            if r.diagnostic == diagnostic:
                return r
        raise KeyError(diagnostic)

    def to_frame(self) -> pd.DataFrame:
        records = []
        for r in self.rows:
            for i, (n, h, v) in enumerate(zip(r.resolutions, r.spacings, r.values)):
                records.append(
                    {
                        "diagnostic": r.diagnostic,
                        "resolution": n,
                        "h": h,
                        "value": v,
                        "order": r.orders[i - 1] if i > 0 else None,
                        "verdict": r.verdict,
                    }
                )
        return pd.DataFrame.from_records(
            records, columns=["diagnostic", "resolution", "h", "value", "order", "verdict"]
        )


class ScenarioSummary(BaseModel):
    """Outcome of one scenario run at one resolution; serialized to summary.json."""

    name: str
    resolution: int
    h: float
    checks: List[str]
    diagnostics: Dict[str, Optional[float]] = Field(default_factory=dict)
    threshold_results: Dict[str, bool] = Field(default_factory=dict)
    reports: Dict[str, Dict] = Field(default_factory=dict)
    exit_code: int = 0

    @property
    def passed(self) -> bool:
        return all(self.threshold_results.values())
