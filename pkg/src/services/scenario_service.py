"""Scenario runner and convergence-study driver.

Loads TOML scenario files into ``ScenarioConfig``, runs the toggled checks in
dependency order, flattens every report into named diagnostics, applies the
configured thresholds and writes the report files:

    summary.json   scenario summary with all diagnostics and verdicts
    charges.csv    r, E_r, P1_r, P2_r, P3_r per sphere radius
    solver.csv     Picard iteration history
    rigidity.json  rigidity, A-tensor and Gauss-Codazzi reports
    levels_K.csv   level-set samples (point, K, H, |h|^2, |h + k|)
    convergence.csv  observed orders per diagnostic (convergence studies)

Example:
    ```python
    service = ScenarioService()
    config = load_config("configs/graph_rigidity.toml", ["grid.resolution=32"])
    summary = service.run_scenario(config)
    summary.exit_code
    ```
"""
import json
import logging
import math
import tomllib
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError

from src.core.concurrency import ordered_map
from src.core.config import settings
from src.core.exceptions import ConfigInvalid, IdsLabError
from src.models.data import HarmonicSolution, InitialDataSet
from src.models.reports import ChargeReport, LevelSetReport
from src.models.scenario import (
    PASSING_VERDICTS,
    ConvergenceRow,
    ConvergenceTable,
    ScenarioConfig,
    ScenarioSummary,
)
from src.services.adm_service import AdmService
from src.services.field_io_service import FieldIOService
from src.services.gaussian_dev_service import GaussianDevelopmentService
from src.services.geometry_service import GeometryService
from src.services.harmonic_service import HarmonicService
from src.services.ids_service import ConstraintService
from src.services.killing_dev_service import KillingDevelopmentService
from src.services.oracle_service import OracleService
from src.services.rigidity_service import RigidityService

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_THRESHOLD = 2

ORDER_BAND = (1.7, 2.3)
NON_VANISHING_ORDER = 0.5
ZERO_FLOOR = 1e-10
ORDER_FLOOR = 1e-13


# ----------------------------------------------------------------------
# Configuration loading
# ----------------------------------------------------------------------

def parse_override(text: str) -> Tuple[str, Any]:
    """``dotted.key=value``; the value is read as a TOML literal, else kept as a string."""
    if "=" not in text:
        raise ConfigInvalid(f"Override '{text}' is not of the form key=value")
    key, raw = (part.strip() for part in text.split("=", 1))
    if not key:
        raise ConfigInvalid(f"Override '{text}' has an empty key")
    try:
        value = tomllib.loads(f"value = {raw}")["value"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key, value


def apply_overrides(mapping: Dict[str, Any], overrides: Iterable[str]) -> Dict[str, Any]:
    for text in overrides:
        key, value = parse_override(text)
        node = mapping
        parts = key.split(".")
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigInvalid(f"Override '{key}' descends into non-table '{part}'")
            node = child
        node[parts[-1]] = value
    return mapping


def validate_config(mapping: Dict[str, Any]) -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(mapping)
    except ValidationError as e:
        raise ConfigInvalid(f"Invalid scenario configuration: {e}") from e


def load_config(path, overrides: Iterable[str] = ()) -> ScenarioConfig:
    """Parse a TOML scenario file, apply ``--set`` overrides and validate.

    A relative ``input_path`` is resolved against the config file's directory.

    Raises:
        ConfigInvalid: Unreadable file, bad override or failed validation.
    """
    path = Path(path)
    try:
        with open(path, "rb") as f:
            mapping = tomllib.load(f)
    except (OSError, tomllib.TOMLDecodeError) as e:
        raise ConfigInvalid(f"Cannot read scenario file {path}: {e}") from e
    mapping = apply_overrides(mapping, overrides)
    if "input_path" in mapping and not Path(mapping["input_path"]).is_absolute():
        mapping["input_path"] = str(path.parent / mapping["input_path"])
    mapping.setdefault("name", path.stem)
    config = validate_config(mapping)
    logger.info(f"Loaded scenario '{config.name}' from {path} with checks {config.ordered_checks()}")
    return config


# ----------------------------------------------------------------------
# Convergence verdicts
# ----------------------------------------------------------------------

def observed_orders(spacings: List[float], values: List[Optional[float]]) -> List[Optional[float]]:
    """p = log(v_i / v_{i+1}) / log(h_i / h_{i+1}) when both values exceed 1e-13."""
    orders = []
    for (h0, v0), (h1, v1) in zip(zip(spacings, values), zip(spacings[1:], values[1:])):
        if v0 is None or v1 is None or abs(v0) <= ORDER_FLOOR or abs(v1) <= ORDER_FLOOR:
            orders.append(None)
        else:
            orders.append(math.log(abs(v0) / abs(v1)) / math.log(h0 / h1))
    return orders


def verdict(values: List[Optional[float]], orders: List[Optional[float]]) -> str:
    """Classify one diagnostic across refinement levels.

    ``pass_order`` needs every consecutive order inside ``ORDER_BAND``;
    ``non_vanishing_limit`` needs every order below 0.5 and every consecutive
    pair of values within 20% of the finer one.
    """
    if values and all(v is not None and abs(v) < ZERO_FLOOR for v in values):
        return "below_floor"
    if not orders or any(p is None for p in orders):
        return "fail"
    if all(ORDER_BAND[0] <= p <= ORDER_BAND[1] for p in orders):
        return "pass_order"
    settled = all(abs(v1 - v0) <= 0.2 * abs(v1) for v0, v1 in zip(values, values[1:]))
    if settled and all(p < NON_VANISHING_ORDER for p in orders):
        return "non_vanishing_limit"
    return "fail"


# ----------------------------------------------------------------------
# Runner
# ----------------------------------------------------------------------

class ScenarioService:
    """Runs scenarios and convergence studies on top of the check services."""

    def __init__(self, geometry: Optional[GeometryService] = None):
        self.geometry = geometry or GeometryService()
        self.oracle = OracleService()
        self.constraints = ConstraintService(self.geometry)
        self.adm = AdmService(self.geometry)
        self.harmonic = HarmonicService(self.geometry, self.constraints)
        self.rigidity = RigidityService(self.geometry, self.constraints)
        self.gaussian = GaussianDevelopmentService(self.geometry)
        self.killing = KillingDevelopmentService(self.geometry, self.oracle, self.constraints)
        self.field_io = FieldIOService()

    def output_dir(self, config: ScenarioConfig) -> Path:
        return Path(config.output_dir or Path(settings.output_dir) / config.name)

    def load_dataset(self, config: ScenarioConfig) -> InitialDataSet:
        if config.input_path is not None:
            return self.field_io.read_ids(config.input_path)
        return self.oracle.build(config.slice.with_grid(config.grid.build()))

    def export_slice(self, config: ScenarioConfig, out) -> Path:
        """Generate the scenario's oracle data set and write it as an IDS container."""
        if config.slice is None:
            raise ConfigInvalid("Export needs a [slice] section")
        return self.field_io.write_ids(out, self.load_dataset(config))

    def _run_check(self, check: str, config: ScenarioConfig, state: Dict[str, Any]) -> None:
        ids: InitialDataSet = state.get("ids")
        diagnostics = state["diagnostics"]
        reports = state["reports"]

        if check == "constraints":
            data = self.constraints.constraint_data(ids)
            state["constraint_data"] = data
            report = self.constraints.report(data, ids.interior_mask(self.geometry.boundary_layer))
            reports["constraints"] = report.model_dump()
            diagnostics.update(max_mu=report.max_mu, max_J=report.max_J, min_dec_margin=report.min_dec_margin)

        elif check == "adm":
            charges = self.adm.adm_charges(ids, config.radii)
            state["charges"] = charges
            reports["adm"] = charges.model_dump()
            diagnostics.update(
                adm_energy=charges.energy, adm_momentum_norm=charges.momentum_norm, adm_residual=charges.residual
            )

        elif check == "harmonic":
            data = state.get("constraint_data")
            sol = self.harmonic.solve_spacetime_harmonic(ids, config.solver, data)
            state["solution"] = sol
            reports["harmonic"] = {
                "iterations": sol.iterations,
                "final_residual": sol.final_residual,
                "converged": sol.converged,
                "min_grad_norm": sol.min_grad_norm,
                "eps_reg": sol.eps_reg,
            }
            diagnostics.update(solver_residual=sol.final_residual, min_grad_norm=sol.min_grad_norm)
            if "charges" in state and sol.converged:
                hkk = self.harmonic.hkk_report(ids, sol, state["charges"], data)
                reports["hkk"] = hkk.model_dump()
                diagnostics.update(hkk_lhs=hkk.lhs, hkk_rhs=hkk.rhs, hkk_slack=hkk.slack)

        elif check == "rigidity":
            sol: HarmonicSolution = state["solution"]
            report, levels, a_report, gc_report = self.rigidity.rigidity_report(
                ids, sol, config.levels, state.get("constraint_data")
            )
            state["level_reports"] = levels
            reports["rigidity"] = report.model_dump()
            reports["a_tensor"] = a_report.model_dump()
            reports["gauss_codazzi"] = gc_report.model_dump()
            diagnostics.update(
                hess_residual=report.hess_residual,
                hess_residual_l2=report.hess_residual_l2,
                energy_residual=report.energy_residual,
                level_set_K=max(report.level_set_K.values(), default=None),
                h_plus_k=report.h_plus_k,
                A_norm=report.A_norm,
                trace_identity=report.trace_identity,
                gauss_residual=report.gauss_residual,
                codazzi_residual=report.codazzi_residual,
                frame_rotation=report.frame_rotation,
            )

        elif check == "gaussian_dev":
            params = config.development
            result = self.gaussian.evolve_gaussian_development(ids, params.eps, params.steps)
            report = self.gaussian.report(result, params.eps, params.steps)
            reports["gaussian_dev"] = report.model_dump()
            diagnostics.update(
                development_flatness=report.flatness,
                development_restriction=report.restriction_residual,
                development_integration_error=report.integration_error,
            )

        elif check == "killing_dev":
            dev = self.killing.build_killing_development(ids, state["solution"], config.development.tau_extent)
            report = self.killing.report(dev)
            reports["killing_dev"] = report.model_dump()
            diagnostics.update(
                killing_null_hessian=report.null_hessian,
                killing_flatness=report.max_riemann_norm,
                killing_scalar=report.scalar_curvature,
                killing_slice_residual=report.slice_extrinsic_residual,
            )

        elif check == "ppwave":
            pp = config.ppwave
            report = self.killing.pp_wave_ricci_check(pp.spec, pp.build_grid(), pp.assume_dec)
            reports["ppwave"] = report.model_dump()
            diagnostics.update(
                pp_ricci_u1=report.ricci_u1,
                pp_ricci_u2=report.ricci_u2,
                pp_ricci_uu=report.ricci_uu,
                pp_off_list_max=report.off_list_max,
                pp_riemann_F=report.riemann_F,
                pp_ricci_uu_laplacian_F=report.ricci_uu_laplacian_F,
                pp_max_laplacian_F=report.max_laplacian_F,
                pp_normal_mu=report.normal_mu,
                pp_normal_J=report.normal_J,
            )

    def evaluate_thresholds(self, config: ScenarioConfig, diagnostics: Dict[str, Optional[float]]) -> Dict[str, bool]:
        results = {}
        pp_h = config.ppwave.build_grid().spatial().h if config.ppwave is not None else config.grid.h
        for name, spec in config.thresholds.items():
            if name not in diagnostics:
                logger.warning(f"Threshold '{name}' names no diagnostic of scenario '{config.name}'")
            h = pp_h if name.startswith("pp_") else config.grid.h
            results[name] = spec.passes(diagnostics.get(name), h)
            if not results[name]:
                lo, hi = spec.bounds(h)
                logger.warning(f"Threshold failed: {name} = {diagnostics.get(name)} outside [{lo}, {hi}]")
        return results

    def run_scenario(self, config: ScenarioConfig, write: bool = True) -> ScenarioSummary:
        """Run every toggled check, apply thresholds and write the report files.

        Returns:
            ScenarioSummary with ``exit_code`` 0 (all thresholds pass) or 2.

        Raises:
            IdsLabError: The failing check's error, re-raised with the check and
                resolution prepended to its message.
        """
        checks = config.ordered_checks()
        state: Dict[str, Any] = {"diagnostics": {}, "reports": {}}
        needs_data = any(c != "ppwave" for c in checks)
        logger.info(f"Running scenario '{config.name}' at N={config.grid.resolution}: {checks}")
        for check in checks:
            try:
                if needs_data and "ids" not in state:
                    state["ids"] = self.load_dataset(config)
                self._run_check(check, config, state)
            except IdsLabError as e:
                logger.error(f"Check '{check}' failed at N={config.grid.resolution}: {e}")
                raise type(e)(f"[{config.name}: {check} at N={config.grid.resolution}] {e}") from e

        diagnostics = {k: (None if v is None else float(v)) for k, v in state["diagnostics"].items()}
        threshold_results = self.evaluate_thresholds(config, diagnostics)
        summary = ScenarioSummary(
            name=config.name,
            resolution=config.grid.resolution,
            h=config.grid.h,
            checks=checks,
            diagnostics=diagnostics,
            threshold_results=threshold_results,
            reports=state["reports"],
            exit_code=EXIT_OK if all(threshold_results.values()) else EXIT_THRESHOLD,
        )
        if write:
            self.write_reports(self.output_dir(config), summary, state)
        logger.info(f"Scenario '{config.name}' finished with exit code {summary.exit_code}")
        return summary

    def write_reports(self, out: Path, summary: ScenarioSummary, state: Dict[str, Any]) -> None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.json").write_text(summary.model_dump_json(indent=2))

        charges: Optional[ChargeReport] = state.get("charges")
        if charges is not None:
            frame = pd.DataFrame({"r": charges.radii, "E_r": charges.energies})
            momenta = np.asarray(charges.momenta)
            for i, axis in enumerate(("P1_r", "P2_r", "P3_r")):
                frame[axis] = momenta[:, i]
            frame.to_csv(out / "charges.csv", index=False)

        sol: Optional[HarmonicSolution] = state.get("solution")
        if sol is not None:
            pd.DataFrame.from_records(
                [vars(r) for r in sol.history], columns=["iteration", "residual", "inner_iterations", "halvings"]
            ).to_csv(out / "solver.csv", index=False)

        rigidity = {k: summary.reports[k] for k in ("rigidity", "a_tensor", "gauss_codazzi") if k in summary.reports}
        if rigidity:
            (out / "rigidity.json").write_text(json.dumps(rigidity, indent=2))

        levels: Optional[List[LevelSetReport]] = state.get("level_reports")
        if levels:
            frames = [
                pd.DataFrame(
                    {
                        "level": r.level,
                        "x": r.points[0],
                        "y": r.points[1],
                        "z": r.points[2],
                        "K": r.K,
                        "H": r.H,
                        "h_norm2": r.h_norm2,
                        "h_plus_k": r.h_plus_k,
                    }
                )
                for r in levels
            ]
            pd.concat(frames, ignore_index=True).to_csv(out / "levels_K.csv", index=False)
        logger.info(f"Reports written to {out}")

    # ------------------------------------------------------------------
    # Convergence studies
    # ------------------------------------------------------------------

    def convergence_study(self, config: ScenarioConfig, levels: Optional[List[int]] = None,
                          parallel: Optional[bool] = None) -> ConvergenceTable:
        """Rerun the scenario per refinement level and tabulate observed orders.

        Each level writes its reports to ``<output>/level_<N>``; the table goes to
        ``<output>/convergence.csv``.

        Raises:
            ConfigInvalid: Fewer than three levels, or levels not refining.
        """
        levels = list(levels or config.convergence.levels)
        if len(levels) < 3:
            raise ConfigInvalid(f"A convergence study needs at least 3 levels, got {levels}")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ConfigInvalid(f"Convergence levels must be strictly refining, got {levels}")
        parallel = config.convergence.parallel if parallel is None else parallel
        out = self.output_dir(config)

        def one_level(n: int) -> ScenarioSummary:
            level_config = config.at_level(n).model_copy(update={"output_dir": out / f"level_{n}"})
            return self.run_scenario(level_config)

        summaries = ordered_map(one_level, levels, workers=None if parallel else 1)
        names = config.convergence.diagnostics or list(summaries[0].diagnostics)
        spacings = [s.h for s in summaries]
        table = ConvergenceTable(scenario=config.name)
        for name in names:
            values = [s.diagnostics.get(name) for s in summaries]
            orders = observed_orders(spacings, values)
            table.rows.append(
                ConvergenceRow(
                    diagnostic=name,
                    resolutions=levels,
                    spacings=spacings,
                    values=values,
                    orders=orders,
                    verdict=verdict(values, orders),
                )
            )
        out.mkdir(parents=True, exist_ok=True)
        table.to_frame().to_csv(out / "convergence.csv", index=False)
        logger.info(f"Convergence table for '{config.name}' written to {out / 'convergence.csv'}")
        return table

    @staticmethod
    def convergence_exit_code(config: ScenarioConfig, table: ConvergenceTable) -> int:
        """0 when every row meets its expected verdict (a pass unless ``expect`` says otherwise)."""
        failed = []
        for row in table.rows:
            expected = config.convergence.expect.get(row.diagnostic)
            ok = row.verdict == expected if expected else row.verdict in PASSING_VERDICTS
            if not ok:
                failed.append(f"{row.diagnostic} ({row.verdict})")
        if failed:
            logger.warning(f"Convergence verdicts not met: {', '.join(failed)}")
            return EXIT_THRESHOLD
        return EXIT_OK
