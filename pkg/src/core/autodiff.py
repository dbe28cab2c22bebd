"""Second-order forward-mode automatic differentiation (hyper-dual numbers).

A ``HyperDual`` carries a value together with its exact gradient and Hessian
with respect to ``n`` seed variables. All parts are numpy arrays of the same
trailing shape, so a whole grid is differentiated in one pass.

Example:
    ```python
    x = HyperDual.variables(grid.coordinates())
    r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2]
    f = 0.1 * (-r2).exp()
    f.grad, f.hess   # exact first and second partials on every node
    ```
"""
from dataclasses import dataclass
from typing import List, Sequence, Union

import numpy as np

Scalar = Union[float, int, np.ndarray]


@dataclass
class HyperDual:
    """Value plus exact gradient and Hessian in ``n`` variables.

    Attributes:
        val: Function value, shape ``S``.
        grad: First partials, shape ``(n, *S)``.
        hess: Second partials, shape ``(n, n, *S)``.
    """

    val: np.ndarray
    grad: np.ndarray
    hess: np.ndarray

    @classmethod
    def variables(cls, coords: Sequence[np.ndarray]) -> List["HyperDual"]:
        """Seed one independent variable per coordinate array."""
        n = len(coords)
        shape = np.shape(coords[0])
        seeded = []
        for i, c in enumerate(coords):
            grad = np.zeros((n,) + shape)
            grad[i] = 1.0
            seeded.append(cls(np.asarray(c, dtype=float), grad, np.zeros((n, n) + shape)))
        return seeded

    @classmethod
    def constant(cls, value: Scalar, n: int, shape) -> "HyperDual":
        val = np.broadcast_to(np.asarray(value, dtype=float), shape).copy()
        return cls(val, np.zeros((n,) + tuple(shape)), np.zeros((n, n) + tuple(shape)))

    @property
    def nvars(self) -> int:
        return self.grad.shape[0]

    def _lift(self, other) -> "HyperDual":
        if isinstance(other, HyperDual):
            return other
        return HyperDual.constant(other, self.nvars, np.shape(self.val))

    def _chain(self, f0: np.ndarray, f1: np.ndarray, f2: np.ndarray) -> "HyperDual":
        g = self.grad
        outer = g[:, None] * g[None, :]
        return HyperDual(f0, f1 * g, f1 * self.hess + f2 * outer)

    def __add__(self, other) -> "HyperDual":
        o = self._lift(other)
        return HyperDual(self.val + o.val, self.grad + o.grad, self.hess + o.hess)

    __radd__ = __add__

    def __neg__(self) -> "HyperDual":
        return HyperDual(-self.val, -self.grad, -self.hess)

    def __sub__(self, other) -> "HyperDual":
        return self + (-self._lift(other))

    def __rsub__(self, other) -> "HyperDual":
        return self._lift(other) - self

    def __mul__(self, other) -> "HyperDual":
        if not isinstance(other, HyperDual):
            c = np.asarray(other, dtype=float)
            return HyperDual(self.val * c, self.grad * c, self.hess * c)
        a, b = self, other
        cross = a.grad[:, None] * b.grad[None, :]
        return HyperDual(
            a.val * b.val,
            a.grad * b.val + a.val * b.grad,
            a.hess * b.val + a.val * b.hess + cross + np.swapaxes(cross, 0, 1),
        )

    __rmul__ = __mul__

    def reciprocal(self) -> "HyperDual":
        if np.any(self.val == 0.0):
            raise ZeroDivisionError("HyperDual division by a zero real part")
        inv = 1.0 / self.val
        return self._chain(inv, -inv * inv, 2.0 * inv * inv * inv)

    def __truediv__(self, other) -> "HyperDual":
        if not isinstance(other, HyperDual):
            return self * (1.0 / np.asarray(other, dtype=float))
        return self * other.reciprocal()

    def __rtruediv__(self, other) -> "HyperDual":
        return self.reciprocal() * other

    def __pow__(self, p: float) -> "HyperDual":
        if p == 0:
            return HyperDual.constant(1.0, self.nvars, np.shape(self.val))
        v = self.val
        if float(p).is_integer() and p > 0:
            f2 = p * (p - 1) * v ** (p - 2) if p >= 2 else np.zeros_like(v)
            return self._chain(v ** p, p * v ** (p - 1), f2)
        return self._chain(v ** p, p * v ** (p - 1), p * (p - 1) * v ** (p - 2))

    def sin(self) -> "HyperDual":
        s, c = np.sin(self.val), np.cos(self.val)
        return self._chain(s, c, -s)

    def cos(self) -> "HyperDual":
        s, c = np.sin(self.val), np.cos(self.val)
        return self._chain(c, -s, -c)

    def exp(self) -> "HyperDual":
        e = np.exp(self.val)
        return self._chain(e, e, e)

    def sqrt(self) -> "HyperDual":
        r = np.sqrt(self.val)
        return self._chain(r, 0.5 / r, -0.25 / (r * self.val))

    def log(self) -> "HyperDual":
        return self._chain(np.log(self.val), 1.0 / self.val, -1.0 / self.val ** 2)
