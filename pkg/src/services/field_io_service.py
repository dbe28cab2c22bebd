"""Binary containers for gridded fields and initial data sets.

Layout of every container:

    [8 bytes]  little-endian uint64 header length n
    [n bytes]  UTF-8 JSON header
    [payload]  little-endian float64 values

Payloads are stored node-major: nodes in row-major order, all components of
one node contiguous. A single-field container describes its field at the top
level of the header; a multi-payload container (the IDS format) lists its
payloads under ``"fields"`` with byte offsets relative to the payload start.

Example:
    ```python
    io = FieldIOService()
    io.write_ids("slice.ids", ids)
    ids = io.read_ids("slice.ids")
    ```
"""
import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from src.core.exceptions import FieldFormatError
from src.models.data import InitialDataSet
from src.models.grid import Grid, MetricField, TensorField

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
HEADER_PREFIX = struct.Struct("<Q")
FIELD_FORMAT = "ids-lab/field"
IDS_FORMAT = "ids-lab/ids"
FORMAT_VERSION = 1
MAX_HEADER_BYTES = 1 << 20


def grid_header(grid: Grid) -> Dict[str, Any]:
    return {
        "dim": grid.dim,
        "shape": list(grid.shape),
        "spacing": list(grid.spacing),
        "origin": list(grid.origin),
        # leading axis below the 9-node minimum: a spacetime slab
        "thin_leading_axis": grid.shape[0] < 9,
    }


def grid_from_header(header: Dict[str, Any]) -> Grid:
    try:
        if header.get("thin_leading_axis"):
            spatial = Grid(
                dim=header["dim"] - 1,
                shape=tuple(header["shape"][1:]),
                spacing=tuple(header["spacing"][1:]),
                origin=tuple(header["origin"][1:]),
            )
            nodes = header["shape"][0]
            spacing = header["spacing"][0]
            centre = header["origin"][0] + 0.5 * (nodes - 1) * spacing
            return Grid.product(spatial, spacing, nodes, centre)
        return Grid(
            dim=header["dim"],
            shape=tuple(header["shape"]),
            spacing=tuple(header["spacing"]),
            origin=tuple(header["origin"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise FieldFormatError(f"Invalid grid header: {e}") from e


def encode_payload(values: np.ndarray, rank: int) -> bytes:
    """(d,)*rank + S -> node-major little-endian float64 bytes."""
    order = tuple(range(rank, values.ndim)) + tuple(range(rank))
    return np.ascontiguousarray(np.transpose(values, order), dtype="<f8").tobytes()


def decode_payload(buffer: bytes, grid: Grid, rank: int) -> np.ndarray:
    components = (grid.dim,) * rank
    expected = grid.num_nodes * int(np.prod(components, dtype=int)) * 8
    if len(buffer) != expected:
        raise FieldFormatError(f"Payload has {len(buffer)} bytes, expected {expected}")
    flat = np.frombuffer(buffer, dtype="<f8").reshape(tuple(grid.shape) + components)
    order = tuple(range(grid.dim, grid.dim + rank)) + tuple(range(grid.dim))
    return np.transpose(flat, order).astype(float)


def _field_entry(field: TensorField) -> Dict[str, Any]:
    return {
        "rank": field.rank,
        "covariance": list(field.covariance),
        "symmetry": [list(pair) for pair in field.symmetry],
    }


def _field_from_entry(grid: Grid, entry: Dict[str, Any], buffer: bytes) -> TensorField:
    try:
        rank = int(entry["rank"])
        covariance = tuple(entry["covariance"])
        symmetry = tuple(tuple(pair) for pair in entry.get("symmetry", []))
    except (KeyError, TypeError, ValueError) as e:
        raise FieldFormatError(f"Invalid field entry: {e}") from e
    if len(covariance) != rank:
        raise FieldFormatError(f"Covariance {covariance} does not match rank {rank}")
    return TensorField(grid, decode_payload(buffer, grid, rank), covariance, symmetry)


class FieldIOService:
    """Reads and writes field and IDS containers."""

    @staticmethod
    def _write(path: Path, header: Dict[str, Any], payload: bytes) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        blob = json.dumps(header, sort_keys=True).encode("utf-8")
        with open(path, "wb") as f:
            f.write(HEADER_PREFIX.pack(len(blob)))
            f.write(blob)
            f.write(payload)
        logger.info(f"Wrote {header.get('format')} container {path} ({len(payload)} payload bytes)")
        return path

    @staticmethod
    def _read(path: PathLike) -> Tuple[Dict[str, Any], bytes]:
        path = Path(path)
        if not path.is_file():
            raise FieldFormatError(f"No such container: {path}")
        data = path.read_bytes()
        if len(data) < HEADER_PREFIX.size:
            raise FieldFormatError(f"{path} is too short to hold a header")
        (length,) = HEADER_PREFIX.unpack_from(data)
        if length > MAX_HEADER_BYTES or HEADER_PREFIX.size + length > len(data):
            raise FieldFormatError(f"{path} declares an implausible header length {length}")
        try:
            header = json.loads(data[HEADER_PREFIX.size:HEADER_PREFIX.size + length].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise FieldFormatError(f"{path} has an unreadable header: {e}") from e
        if header.get("version") != FORMAT_VERSION:
            raise FieldFormatError(f"{path}: unsupported container version {header.get('version')}")
        return header, data[HEADER_PREFIX.size + length:]

    def write_field(self, path: PathLike, field: TensorField, signature: Optional[Tuple[int, ...]] = None) -> Path:
        """Write one tensor field; ``signature`` marks the field as a metric."""
        header = {"format": FIELD_FORMAT, "version": FORMAT_VERSION, **grid_header(field.grid), **_field_entry(field)}
        if signature is not None:
            header["signature"] = list(signature)
        return self._write(Path(path), header, encode_payload(field.values, field.rank))

    def write_metric(self, path: PathLike, metric: MetricField) -> Path:
        return self.write_field(path, metric.tensor, metric.signature)

    def write_scalar(self, path: PathLike, grid: Grid, values: np.ndarray) -> Path:
        return self.write_field(path, TensorField(grid, np.asarray(values, dtype=float), ()))

    def _read_field(self, path: PathLike) -> Tuple[Dict[str, Any], TensorField]:
        header, payload = self._read(path)
        if header.get("format") != FIELD_FORMAT:
            raise FieldFormatError(f"{path} is not a field container (format {header.get('format')!r})")
        return header, _field_from_entry(grid_from_header(header), header, payload)

    def read_field(self, path: PathLike) -> TensorField:
        return self._read_field(path)[1]

    def read_metric(self, path: PathLike) -> MetricField:
        header, field = self._read_field(path)
        signature = tuple(header.get("signature") or (1,) * field.grid.dim)
        return MetricField(field, signature)

    def write_ids(self, path: PathLike, ids: InitialDataSet) -> Path:
        """Write (g, k) with tau, provenance and the excision and mask radii."""
        g_bytes = encode_payload(ids.g.values, 2)
        k_bytes = encode_payload(ids.k.values, 2)
        header = {
            "format": IDS_FORMAT,
            "version": FORMAT_VERSION,
            **grid_header(ids.grid),
            "tau": ids.tau,
            "provenance": ids.provenance,
            "excision_radius": ids.excision_radius,
            "mask_radius": ids.mask_radius,
            "fields": {
                "g": {**_field_entry(ids.g.tensor), "offset": 0, "nbytes": len(g_bytes)},
                "k": {**_field_entry(ids.k), "offset": len(g_bytes), "nbytes": len(k_bytes)},
            },
        }
        return self._write(Path(path), header, g_bytes + k_bytes)

    def read_ids(self, path: PathLike) -> InitialDataSet:
        """Load an IDS container written by this tool or a third party.

        Raises:
            FieldFormatError: Malformed container.
            SingularMetric: g is not positive definite.
        """
        header, payload = self._read(path)
        if header.get("format") != IDS_FORMAT:
            raise FieldFormatError(f"{path} is not an IDS container (format {header.get('format')!r})")
        grid = grid_from_header(header)
        fields = header.get("fields") or {}
        if "g" not in fields or "k" not in fields:
            raise FieldFormatError(f"{path} must carry payloads 'g' and 'k'")

        def payload_of(name: str) -> TensorField:
            entry = fields[name]
            start, size = int(entry["offset"]), int(entry["nbytes"])
            return _field_from_entry(grid, entry, payload[start:start + size])

        g, k = payload_of("g"), payload_of("k")
        try:
            ids = InitialDataSet(
                g=MetricField(g, (1,) * grid.dim),
                k=k,
                tau=float(header.get("tau", 1.0)),
                provenance=str(header.get("provenance", Path(path).name)),
                excision_radius=header.get("excision_radius"),
                mask_radius=header.get("mask_radius"),
            )
        except ValueError as e:
            raise FieldFormatError(f"{path}: {e}") from e
        logger.info(f"Loaded IDS {ids.provenance} on grid {grid.shape} from {path}")
        return ids
