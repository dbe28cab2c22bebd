"""
ids-lab command line.

    ids-lab run --config configs/flat.toml [--set grid.resolution=32]...
    ids-lab converge --config configs/graph_rigidity.toml --levels 24,32,48 [--parallel]
    ids-lab export --slice graph --out graph.ids [--set slice.amplitude=0.2]...

Exit codes: 0 when every toggled threshold (or convergence verdict) passes,
2 on a threshold failure and 1 on any error.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from src.core.config import settings
from src.core.exceptions import ConfigInvalid, IdsLabError
from src.services.scenario_service import (
    EXIT_ERROR,
    EXIT_OK,
    ScenarioService,
    apply_overrides,
    load_config,
    validate_config,
)

logger = logging.getLogger(__name__)


def parse_levels(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"Levels must be comma-separated integers, got '{text}'") from e


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ids-lab", description="Numerical checks of initial data sets.")
    parser.add_argument("--log-level", default=settings.log_level, help="Logging level (default from IDSLAB_LOG_LEVEL)")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run one scenario and write its reports")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")

    converge = sub.add_parser("converge", help="Rerun a scenario over refinement levels")
    converge.add_argument("--config", required=True, type=Path)
    converge.add_argument("--levels", type=parse_levels, default=None, help="e.g. 24,32,48")
    converge.add_argument("--parallel", action="store_true", help="Run levels concurrently (IDSLAB_THREADS caps)")
    converge.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")

    export = sub.add_parser("export", help="Write an oracle data set as an IDS container")
    export.add_argument("--slice", required=True, help="Slice kind (flat, graph, boosted_graph, schwarzschild) or a .toml scenario")
    export.add_argument("--out", required=True, type=Path)
    export.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    return parser


def export_config(slice_arg: str, overrides: List[str]):
    path = Path(slice_arg)
    if path.suffix == ".toml":
        return load_config(path, overrides)
    mapping = apply_overrides({"name": slice_arg, "slice": {"kind": slice_arg}}, overrides)
    return validate_config(mapping)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    service = ScenarioService()
    try:
        if args.command == "run":
            summary = service.run_scenario(load_config(args.config, args.overrides))
            return summary.exit_code
        if args.command == "converge":
            config = load_config(args.config, args.overrides)
            table = service.convergence_study(config, args.levels, parallel=args.parallel or None)
            for row in table.rows:
                logger.info(f"{row.diagnostic}: orders={row.orders} verdict={row.verdict}")
            return service.convergence_exit_code(config, table)
        if args.command == "export":
            out = service.export_slice(export_config(args.slice, args.overrides), args.out)
            logger.info(f"Exported {args.slice} to {out}")
            return EXIT_OK
    except ConfigInvalid as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_ERROR
    except (IdsLabError, OSError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_ERROR
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
