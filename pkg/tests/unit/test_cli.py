"""
Unit tests for the command-line surface.
"""
import argparse

import pytest

from src.cli.main import build_parser, export_config, main, parse_levels
from src.services.field_io_service import FieldIOService


@pytest.mark.unit
class TestParser:
    """Argument parsing."""

    def test_levels(self):
        assert parse_levels("24,32,48") == [24, 32, 48]
        assert parse_levels("8, 12,") == [8, 12]
        with pytest.raises(argparse.ArgumentTypeError):
            parse_levels("24,x")

    def test_repeated_overrides(self):
        args = build_parser().parse_args(
            ["run", "--config", "configs/flat.toml", "--set", "grid.resolution=8", "--set", "radii=[1.0, 1.5]"]
        )
        assert args.command == "run"
        assert args.overrides == ["grid.resolution=8", "radii=[1.0, 1.5]"]

    def test_converge_options(self):
        args = build_parser().parse_args(["converge", "--config", "x.toml", "--levels", "8,12,16", "--parallel"])
        assert args.levels == [8, 12, 16]
        assert args.parallel

    def test_command_required(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])


@pytest.mark.unit
class TestExport:
    """``ids-lab export``."""

    def test_kind_with_overrides(self):
        config = export_config("graph", ["slice.amplitude=0.2", "grid.resolution=6"])
        assert config.slice.kind == "graph"
        assert config.slice.amplitude == pytest.approx(0.2)
        assert config.grid.resolution == 6

    def test_export_writes_container(self, tmp_path):
        out = tmp_path / "flat.ids"
        code = main(["export", "--slice", "flat", "--out", str(out), "--set", "grid.resolution=6"])
        assert code == 0
        ids = FieldIOService().read_ids(out)
        assert ids.grid.shape == (13, 13, 13)

    def test_unknown_kind_is_a_config_error(self, tmp_path):
        assert main(["export", "--slice", "wormhole", "--out", str(tmp_path / "w.ids")]) == 1

    def test_missing_config_is_an_error(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "absent.toml")]) == 1
