"""Test configuration and common fixtures."""
import sys
from pathlib import Path

import numpy as np
import pytest

# Add src to Python path for all tests
ROOT_DIR = Path(__file__).parent.parent
sys.path.insert(0, str(ROOT_DIR))

from src.models.data import InitialDataSet  # noqa: E402
from src.models.grid import Grid, MetricField, TensorField  # noqa: E402
from src.models.specs import SliceSpec, SolverParams  # noqa: E402
from src.services.geometry_service import GeometryService  # noqa: E402
from src.services.harmonic_service import HarmonicService  # noqa: E402
from src.services.oracle_service import OracleService  # noqa: E402


@pytest.fixture(scope="session")
def configs_dir():
    """Fixture providing the directory of the shipped scenario files."""
    return ROOT_DIR / "configs"


@pytest.fixture
def geometry():
    return GeometryService(boundary_layer=3)


@pytest.fixture(scope="session")
def oracle():
    return OracleService()


@pytest.fixture(scope="session")
def small_grid():
    """[-3, 3]^3 with h = 0.5 (13 nodes per axis)."""
    return Grid.box(3, 3.0, 6)


@pytest.fixture(scope="session")
def flat_ids(oracle, small_grid):
    return oracle.build(SliceSpec(kind="flat", grid=small_grid))


@pytest.fixture(scope="session")
def flat_solution(flat_ids):
    return HarmonicService(GeometryService(boundary_layer=3)).solve_spacetime_harmonic(flat_ids, SolverParams())


@pytest.fixture(scope="session")
def graph_spec():
    """Gaussian bump graph on [-3, 3]^3 with h = 0.25."""
    return SliceSpec(kind="graph", amplitude=0.1, width=1.0, grid=Grid.box(3, 3.0, 12))


@pytest.fixture(scope="session")
def graph_ids(oracle, graph_spec):
    return oracle.build(graph_spec)


def constant_ids(grid: Grid, k_diagonal, provenance: str = "constant k") -> InitialDataSet:
    """Flat metric with a constant diagonal k."""
    eye = np.broadcast_to(np.eye(3)[:, :, None, None, None], (3, 3) + tuple(grid.shape)).copy()
    k = np.zeros((3, 3) + tuple(grid.shape))
    for i, value in enumerate(k_diagonal):
        k[i, i] = value
    return InitialDataSet(
        g=MetricField.from_values(grid, eye),
        k=TensorField.symmetric2(grid, k),
        tau=1.0,
        provenance=provenance,
    )


def quarter_turn(ids: InitialDataSet) -> InitialDataSet:
    """The data set turned by 90 degrees in the x0-x1 plane."""
    return InitialDataSet(
        g=MetricField(GeometryService.rotate_quarter_turn(ids.g.tensor), ids.g.signature),
        k=GeometryService.rotate_quarter_turn(ids.k),
        tau=ids.tau,
        provenance=f"{ids.provenance} (quarter turn)",
        excision_radius=ids.excision_radius,
        mask_radius=ids.mask_radius,
    )


# Test markers
pytest_mark_unit = pytest.mark.unit
pytest_mark_integration = pytest.mark.integration
pytest_mark_slow = pytest.mark.slow
