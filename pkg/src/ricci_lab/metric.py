"""Metric fields with cached inverse and volume density."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import Grid, check_finite

DEFAULT_SPD_FLOOR = 1e-10
INVERSE_TOL = 1e-13


class MetricError(ValueError):
    """Raised when a metric field is not symmetric positive definite."""


def symmetrize(t: np.ndarray) -> np.ndarray:
    return 0.5 * (t + np.swapaxes(t, -1, -2))


@dataclass(frozen=True, eq=False)
class Metric:
    grid: Grid
    g: np.ndarray
    spd_floor: float = DEFAULT_SPD_FLOOR
    inv: np.ndarray = field(init=False, repr=False)
    sqrt_det: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        g = np.asarray(self.g, dtype=np.float64)
        d = self.grid.dim
        if g.shape != self.grid.shape + (d, d):
            raise MetricError(f"metric shape {g.shape} does not match grid {self.grid.shape} x ({d},{d})")
        check_finite(g, "metric")
        if np.max(np.abs(g - np.swapaxes(g, -1, -2))) > 0.0:
            raise MetricError("metric is not symmetric")
        eig_min = np.linalg.eigvalsh(g)[..., 0]
        if np.min(eig_min) <= self.spd_floor:
            node = np.unravel_index(np.argmin(eig_min), eig_min.shape)
            raise MetricError(
                f"metric loses positive definiteness at node {tuple(int(i) for i in node)}: "
                f"min eigenvalue {eig_min[node]:.3e} <= floor {self.spd_floor:.1e}"
            )
        inv = np.linalg.inv(g)
        inv = symmetrize(inv)
        eye = np.eye(d)
        # scale-aware: |g| |g^-1| bounds the roundoff in the product
        scale = np.max(np.abs(g)) * np.max(np.abs(inv))
        err = np.max(np.abs(np.einsum("...ij,...jk->...ik", g, inv) - eye))
        if err > INVERSE_TOL * max(1.0, scale):
            raise MetricError(f"metric inverse inaccurate: max |g g^-1 - I| = {err:.2e}")
        det = np.linalg.det(g)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "inv", inv)
        object.__setattr__(self, "sqrt_det", np.sqrt(det))

    @property
    def dim(self) -> int:
        return self.grid.dim

    def raise_index(self, t: np.ndarray, slot: int = -1) -> np.ndarray:
        """Contract ``g^{ab}`` into tensor slot ``slot`` (counted on tensor axes)."""
        return _contract_slot(self.inv, t, slot)

    def lower_index(self, t: np.ndarray, slot: int = -1) -> np.ndarray:
        return _contract_slot(self.g, t, slot)

    def perturbed(self, v: np.ndarray, eps: float) -> "Metric":
        return Metric(self.grid, self.g + eps * v, self.spd_floor)


def _contract_slot(m: np.ndarray, t: np.ndarray, slot: int) -> np.ndarray:
    axis = slot if slot < 0 else m.ndim - 2 + slot
    moved = np.moveaxis(t, axis, -1)
    out = np.einsum("...b,...ab->...a", moved, _broadcast_matrix(m, moved.ndim))
    return np.moveaxis(out, -1, axis)


def _broadcast_matrix(m: np.ndarray, ndim: int) -> np.ndarray:
    # m is (*shape, d, d); insert axes so it broadcasts against a (*shape, ..., d) tensor
    grid_nd = m.ndim - 2
    extra = ndim - grid_nd - 1
    return m.reshape(m.shape[:grid_nd] + (1,) * extra + m.shape[-2:])


def flat_metric(grid: Grid, scale: float = 1.0) -> Metric:
    g = np.broadcast_to(scale * np.eye(grid.dim), grid.shape + (grid.dim, grid.dim)).copy()
    return Metric(grid, g)


def conformal_metric(grid: Grid, phi: np.ndarray) -> Metric:
    """``e^{2 phi} delta``."""
    g = np.exp(2.0 * phi)[..., None, None] * np.eye(grid.dim)
    return Metric(grid, g)
