"""Periodic uniform grids, 4th-order central stencils and deterministic quadrature.

Fields are plain ``numpy`` arrays laid out grid-axes first, tensor axes last:

* scalar            ``(*shape,)``
* one-form / vector ``(*shape, d)``
* symmetric 2-tensor ``(*shape, d, d)``
* Christoffel       ``(*shape, d, d, d)`` with ``[k, i, j] = Gamma^k_ij``
* Riemann           ``(*shape, d, d, d, d)`` with ``[i, j, k, l] = R_ijkl``

Derivative indices are always prepended to the tensor axes, so
``gradient(T)[..., k, i, j] == d_k T_ij``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

MIN_POINTS = 8
STENCIL_WIDTH = 5


class GridError(ValueError):
    pass


class NonFiniteFieldError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    """A periodic chart ``[0, L_0) x ... x [0, L_{d-1})`` with ``n`` nodes per axis."""

    dim: int
    n: tuple[int, ...]
    length: tuple[float, ...]

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise GridError(f"dim must be 2 or 3, got {self.dim}")
        if len(self.n) != self.dim or len(self.length) != self.dim:
            raise GridError("n and length need one entry per axis")
        if min(self.n) < MIN_POINTS:
            raise GridError(
                f"stencil underflow: need at least {MIN_POINTS} nodes per axis, got {min(self.n)}"
            )
        if min(self.length) <= 0:
            raise GridError("axis lengths must be positive")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.length, self.n))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def num_nodes(self) -> int:
        return int(np.prod(self.n))

    @cached_property
    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(d, *shape)``."""
        axes = [np.arange(n) * h for n, h in zip(self.n, self.spacing)]
        return np.stack(np.meshgrid(*axes, indexing="ij"))

    def refined(self, factor: int = 2) -> "Grid":
        return Grid(self.dim, tuple(n * factor for n in self.n), self.length)


def make_grid(dim: int, n_per_axis: int | tuple[int, ...], length_per_axis=2 * np.pi) -> Grid:
    if dim not in (2, 3):
        raise GridError(f"dim must be 2 or 3, got {dim}")
    n = (n_per_axis,) * dim if np.isscalar(n_per_axis) else tuple(n_per_axis)
    length = (
        (float(length_per_axis),) * dim
        if np.isscalar(length_per_axis)
        else tuple(float(x) for x in length_per_axis)
    )
    return Grid(dim, tuple(int(k) for k in n), length)


def partial(field: np.ndarray, axis: int, grid: Grid) -> np.ndarray:
    """Periodic 4th-order central difference along grid ``axis``, componentwise.

    Non-periodic data (e.g. ``f(x) = x``) is the caller's problem; the wrap is
    applied regardless.
    """
    if not 0 <= axis < grid.dim:
        raise GridError(f"axis {axis} out of range for a {grid.dim}-d grid")
    h = grid.spacing[axis]
    fp1 = np.roll(field, -1, axis=axis)
    fm1 = np.roll(field, 1, axis=axis)
    fp2 = np.roll(field, -2, axis=axis)
    fm2 = np.roll(field, 2, axis=axis)
    return ((fm2 - fp2) + 8.0 * (fp1 - fm1)) / (12.0 * h)


def gradient(field: np.ndarray, grid: Grid) -> np.ndarray:
    """All partials, stacked as a new leading tensor axis."""
    return np.stack([partial(field, a, grid) for a in range(grid.dim)], axis=grid.dim)


def pairwise_sum(values: np.ndarray) -> float:
    """Tree reduction in C (lexicographic node) order; bit-reproducible."""
    x = np.ascontiguousarray(values, dtype=np.float64).ravel()
    if x.size == 0:
        return 0.0
    while x.size > 1:
        if x.size % 2:
            x = np.append(x, 0.0)
        x = x[0::2] + x[1::2]
    return float(x[0])


def check_finite(field: np.ndarray, name: str = "field") -> None:
    if not np.all(np.isfinite(field)):
        bad = np.argwhere(~np.isfinite(field))[0]
        raise NonFiniteFieldError(f"{name} has a non-finite entry at index {tuple(int(i) for i in bad)}")


def integrate(scalar: np.ndarray, metric, grid: Grid | None = None) -> float:
    """Riemannian integral: node sum of ``s * sqrt(det g) * cell volume``.

    ``metric`` is a :class:`ricci_lab.metric.Metric` (its grid is used when
    ``grid`` is omitted).
    """
    grid = grid or metric.grid
    if scalar.shape != grid.shape:
        raise GridError(f"scalar shape {scalar.shape} does not match grid {grid.shape}")
    check_finite(scalar, "integrand")
    return pairwise_sum(scalar * metric.sqrt_det) * grid.cell_volume
