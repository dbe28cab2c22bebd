"""
Gridded domain types: the Cartesian box, tensor fields and metrics on it.

A field of rank ``r`` on a ``d``-dimensional grid stores its values as an
array of shape ``(d,)*r + grid.shape``: component indices first, node indices
last. Scalars are plain arrays of shape ``grid.shape``.
"""
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from src.core.config import settings
from src.core.exceptions import NonFinite, SingularMetric, SymmetryViolation


class Grid(BaseModel):
    """Uniform Cartesian node-centred discretization of a coordinate chart.

    Attributes:
        dim (int): Number of axes (2, 3 or 4).
        spacing (Tuple[float, ...]): Node spacing h per axis.
        shape (Tuple[int, ...]): Node count per axis (odd).
        origin (Tuple[float, ...]): Coordinates of node (0, ..., 0).
    """

    model_config = ConfigDict(frozen=True)

    dim: int
    spacing: Tuple[float, ...]
    shape: Tuple[int, ...]
    origin: Tuple[float, ...]

    @model_validator(mode="after")
    def _check(self) -> "Grid":
        if self.dim not in (2, 3, 4):
            raise ValueError(f"Grid dimension must be 2, 3 or 4, got {self.dim}")
        if not (len(self.spacing) == len(self.shape) == len(self.origin) == self.dim):
            raise ValueError("spacing, shape and origin must have one entry per axis")
        if any(h <= 0 for h in self.spacing):
            raise ValueError("Grid spacing must be positive")
        for n in self.shape:
            if n % 2 == 0:
                raise ValueError(f"Node count per axis must be odd, got {n}")
            if n < 9:
                raise ValueError(f"Need extent >= 4h per axis (>= 9 nodes), got {n}")
        return self

    @classmethod
    def box(cls, dim: int, half_width, resolution) -> "Grid":
        """Centred box [-L, L]^dim with h = L/N, i.e. 2N + 1 nodes per axis.

        ``half_width`` and ``resolution`` may be scalars or per-axis sequences.
        """
        L = np.broadcast_to(np.asarray(half_width, dtype=float), (dim,))
        N = np.broadcast_to(np.asarray(resolution, dtype=int), (dim,))
        return cls(
            dim=dim,
            spacing=tuple(float(l / n) for l, n in zip(L, N)),
            shape=tuple(int(2 * n + 1) for n in N),
            origin=tuple(float(-l) for l in L),
        )

    @classmethod
    def product(cls, spatial: "Grid", spacing: float, nodes: int = 5, centre: float = 0.0) -> "Grid":
        """Spacetime grid (t, *spatial) with a thin leading axis.

        The time axis carries ``nodes`` (odd, >= 5) nodes centred at ``centre``:
        enough for curvature at the centre node by nested differencing. It is
        exempt from the 9-node rule of ordinary axes.
        """
        if nodes % 2 == 0 or nodes < 5:
            raise ValueError(f"Thin axes need an odd node count >= 5, got {nodes}")
        if spatial.dim + 1 > 4:
            raise ValueError("Spacetime grids have at most 4 axes")
        half = 0.5 * (nodes - 1) * spacing
        return cls.model_construct(
            dim=spatial.dim + 1,
            spacing=(float(spacing),) + tuple(spatial.spacing),
            shape=(nodes,) + tuple(spatial.shape),
            origin=(float(centre - half),) + tuple(spatial.origin),
        )

    def spatial(self) -> "Grid":
        """Grid of the trailing axes of a spacetime grid."""
        return Grid.model_construct(
            dim=self.dim - 1, spacing=self.spacing[1:], shape=self.shape[1:], origin=self.origin[1:]
        )

    def centre_slice_mask(self, spatial_mask: np.ndarray) -> np.ndarray:
        """Mask selecting ``spatial_mask`` on the centre node of the leading axis."""
        mask = np.zeros(self.shape, dtype=bool)
        mask[self.shape[0] // 2] = spatial_mask
        return mask

    @property
    def extent(self) -> Tuple[float, ...]:
        """Half-width of the box along each axis."""
        return tuple(0.5 * (n - 1) * h for n, h in zip(self.shape, self.spacing))

    @property
    def h(self) -> float:
        """Largest spacing; the h of every O(h^2) statement."""
        return max(self.spacing)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def num_nodes(self) -> int:
        return int(np.prod(self.shape))

    def axes(self) -> List[np.ndarray]:
        return [o + h * np.arange(n) for o, h, n in zip(self.origin, self.spacing, self.shape)]

    def coordinates(self) -> List[np.ndarray]:
        """Node coordinates, one array of ``self.shape`` per axis."""
        return list(np.meshgrid(*self.axes(), indexing="ij"))

    def radius(self, axes: Optional[Sequence[int]] = None) -> np.ndarray:
        """Euclidean coordinate distance from the origin over ``axes``."""
        coords = self.coordinates()
        axes = range(self.dim) if axes is None else axes
        return np.sqrt(sum(coords[a] ** 2 for a in axes))

    def partial(self, values: np.ndarray, axis: int) -> np.ndarray:
        """Centred 2nd-order difference along ``axis``, one-sided 2nd-order at the ends.

        ``values`` may carry leading component indices.
        """
        offset = values.ndim - self.dim
        return np.gradient(values, self.spacing[axis], axis=offset + axis, edge_order=2)

    def gradient(self, values: np.ndarray) -> np.ndarray:
        """All partials, stacked on a new leading axis."""
        return np.stack([self.partial(values, a) for a in range(self.dim)])

    def interior_mask(self, layer: Optional[int] = None, excision_radius: Optional[float] = None,
                      mask_radius: Optional[float] = None) -> np.ndarray:
        """Nodes at least ``layer`` nodes from the boundary and outside the excised ball.

        ``mask_radius`` additionally drops every node with |x| <= mask_radius,
        a region that does not move under refinement.
        """
        layer = settings.boundary_layer if layer is None else layer
        mask = np.zeros(self.shape, dtype=bool)
        inner = tuple(slice(layer, n - layer) for n in self.shape)
        mask[inner] = True
        if excision_radius is not None:
            mask &= self.radius() > excision_radius + layer * self.h
        if mask_radius is not None:
            mask &= self.radius() > mask_radius
        return mask

    def subgrid(self, axis: int, start: int, stop: int) -> "Grid":
        """Grid of the node slab ``start:stop`` along ``axis`` (no oddness check)."""
        shape = list(self.shape)
        origin = list(self.origin)
        shape[axis] = stop - start
        origin[axis] = self.origin[axis] + start * self.spacing[axis]
        return Grid.model_construct(
            dim=self.dim, spacing=self.spacing, shape=tuple(shape), origin=tuple(origin)
        )


@dataclass(frozen=True)
class TensorField:
    """Gridded tensor field with declared rank, slot types and index symmetry.

    Attributes:
        grid: Grid the field lives on.
        values: Array of shape ``(dim,)*rank + grid.shape``.
        covariance: ``"down"`` or ``"up"`` per slot.
        symmetry: Pairs of slots under which the field is symmetric; enforced exactly.
    """

    grid: Grid
    values: np.ndarray
    covariance: Tuple[str, ...]
    symmetry: Tuple[Tuple[int, int], ...] = field(default=())

    def __post_init__(self):
        rank = len(self.covariance)
        expected = (self.grid.dim,) * rank + tuple(self.grid.shape)
        if self.values.shape != expected:
            raise ValueError(f"Field shape {self.values.shape} does not match {expected}")
        if not np.all(np.isfinite(self.values)):
            raise NonFinite("Tensor field contains NaN or Inf")
        values = self.values
        scale = max(1.0, float(np.max(np.abs(values)))) if values.size else 1.0
        for a, b in self.symmetry:
            swapped = np.swapaxes(values, a, b)
            if np.max(np.abs(values - swapped)) > 1e-10 * scale:
                raise SymmetryViolation(f"Field is not symmetric in slots ({a}, {b})")
            values = 0.5 * (values + swapped)
        object.__setattr__(self, "values", values)

    @property
    def rank(self) -> int:
        return len(self.covariance)

    @classmethod
    def symmetric2(cls, grid: Grid, values: np.ndarray) -> "TensorField":
        """Symmetric down-down rank-2 field."""
        return cls(grid, values, ("down", "down"), ((0, 1),))

    @classmethod
    def covector(cls, grid: Grid, values: np.ndarray) -> "TensorField":
        return cls(grid, values, ("down",))

    def restrict(self, axis: int, start: int, stop: int) -> "TensorField":
        sl = [slice(None)] * self.values.ndim
        sl[self.rank + axis] = slice(start, stop)
        return TensorField(
            self.grid.subgrid(axis, start, stop), self.values[tuple(sl)], self.covariance, self.symmetry
        )


def as_matrix_stack(values: np.ndarray) -> np.ndarray:
    """(d, d, *S) -> (*S, d, d) for pointwise linear algebra."""
    return np.moveaxis(np.moveaxis(values, 0, -1), 0, -1)


def from_matrix_stack(values: np.ndarray) -> np.ndarray:
    """(*S, d, d) -> (d, d, *S)."""
    return np.moveaxis(np.moveaxis(values, -1, 0), -1, 0)


@dataclass(frozen=True)
class MetricField:
    """Pointwise invertible symmetric metric with a declared signature.

    Attributes:
        tensor: Rank-2 symmetric down-down field.
        signature: Sign per axis, e.g. ``(1, 1, 1)`` or ``(-1, 1, 1, 1)``.
    """

    tensor: TensorField
    signature: Tuple[int, ...]

    def __post_init__(self):
        if self.tensor.rank != 2 or self.tensor.covariance != ("down", "down"):
            raise ValueError("Metric must be a rank-2 down-down field")
        if len(self.signature) != self.grid.dim:
            raise ValueError("Signature must list one sign per axis")
        det = self.det
        if np.min(np.abs(det)) <= settings.det_threshold:
            raise SingularMetric(f"Metric determinant min |det| = {np.min(np.abs(det)):.3e}")
        if self.is_riemannian:
            eig = np.linalg.eigvalsh(as_matrix_stack(self.values))
            if np.min(eig) <= 0:
                raise SingularMetric("Riemannian metric is not positive definite at every node")

    @classmethod
    def from_values(cls, grid: Grid, values: np.ndarray, signature: Optional[Tuple[int, ...]] = None) -> "MetricField":
        signature = signature or (1,) * grid.dim
        return cls(TensorField.symmetric2(grid, values), tuple(signature))

    @property
    def grid(self) -> Grid:
        return self.tensor.grid

    @property
    def values(self) -> np.ndarray:
        return self.tensor.values

    @property
    def is_riemannian(self) -> bool:
        return all(s > 0 for s in self.signature)

    @cached_property
    def det(self) -> np.ndarray:
        return np.linalg.det(as_matrix_stack(self.values))

    @cached_property
    def inverse(self) -> np.ndarray:
        """g^{ij}, shape ``(d, d, *S)``.

        Batched LU inversion (``numpy.linalg.inv``) of the per-node matrices,
        then symmetrized exactly. Invertibility is checked once at construction
        against ``settings.det_threshold``.
        """
        inv = from_matrix_stack(np.linalg.inv(as_matrix_stack(self.values)))
        return 0.5 * (inv + np.swapaxes(inv, 0, 1))

    @cached_property
    def volume_density(self) -> np.ndarray:
        """sqrt|det g|."""
        return np.sqrt(np.abs(self.det))

    @cached_property
    def norm_raiser(self) -> np.ndarray:
        """Positive-definite raising metric H^{ab} used for tensor norms.

        For Riemannian metrics this is g^{ab}; otherwise g^{ab} + 2 N^a N^b with N
        the future unit normal of the coordinate-0 time function.
        """
        ginv = self.inverse
        if self.is_riemannian:
            return ginv
        g00 = ginv[0, 0]
        if np.max(g00) >= 0:
            raise SingularMetric("Coordinate 0 is not a time function (g^00 >= 0 somewhere)")
        normal = ginv[:, 0] / np.sqrt(-g00)
        return ginv + 2.0 * normal[:, None] * normal[None, :]

    def restrict(self, axis: int, start: int, stop: int) -> "MetricField":
        return MetricField(self.tensor.restrict(axis, start, stop), self.signature)
