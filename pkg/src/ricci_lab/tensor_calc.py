"""Pointwise Riemannian tensor calculus on periodic grids.

Curvature convention (Besse / Hamilton)::

    R^l_ijk = d_i G^l_jk - d_j G^l_ik + G^l_ip G^p_jk - G^l_jp G^p_ik
    R_ijkl  = g_km R^m_ijl
    Ric_jl  = g^ik R_ijkl,   R = g^jl Ric_jl

so that ``R_ijkl = K (g_ik g_jl - g_il g_jk)`` on a space form and the 2D
conformal metric ``e^{2 phi} delta`` has ``R = -2 e^{-2 phi} lap0(phi)``.
Under this layout ``R_ijk^p`` (raise the last slot) is what the variation
formulas call ``R_ijk^p`` and ``R_i^p_k^q v_pq = R_iakb v^ab``.
"""

from __future__ import annotations

import string
from dataclasses import dataclass

import numpy as np

from .grid import Grid, gradient
from .metric import Metric

# The raw lowered tensor misses the algebraic symmetries by O(h^4) (product-rule
# defect of the stencil), so the guard is a resolution check, not a roundoff one.
RIEMANN_SYM_TOL = 1e-3


class CurvatureError(ValueError):
    pass


def christoffel(metric: Metric) -> np.ndarray:
    """``Gamma^k_ij = 1/2 g^kp (d_i g_jp + d_j g_ip - d_p g_ij)``, shape ``(..., k, i, j)``."""
    dg = gradient(metric.g, metric.grid)  # [c, a, b] = d_c g_ab
    lowered = 0.5 * (
        np.einsum("...ijp->...pij", dg) + np.einsum("...jip->...pij", dg) - dg
    )
    gamma = np.einsum("...kp,...pij->...kij", metric.inv, lowered)
    # exact symmetry in the lower pair
    return 0.5 * (gamma + np.swapaxes(gamma, -1, -2))


def _curvature_projection(r: np.ndarray) -> np.ndarray:
    """Project onto algebraic curvature tensors (antisymmetry, pair symmetry, Bianchi)."""
    r = 0.25 * (
        r
        - np.einsum("...jikl->...ijkl", r)
        - np.einsum("...ijlk->...ijkl", r)
        + np.einsum("...jilk->...ijkl", r)
    )
    r = 0.5 * (r + np.einsum("...klij->...ijkl", r))
    cyclic = (r + np.einsum("...jkil->...ijkl", r) + np.einsum("...kijl->...ijkl", r)) / 3.0
    return r - cyclic


def riemann_mixed(gamma: np.ndarray, grid: Grid) -> np.ndarray:
    """``M[i, j, k, l] = R^l_ijk`` straight from the Christoffel symbols."""
    dgam = gradient(gamma, grid)  # [i, l, j, k] = d_i G^l_jk
    t = np.einsum("...iljk->...ijkl", dgam)
    t = t - np.einsum("...ijkl->...jikl", t)
    q = np.einsum("...lip,...pjk->...ijkl", gamma, gamma)
    q = q - np.einsum("...ijkl->...jikl", q)
    return t + q


def riemann(metric: Metric, gamma: np.ndarray | None = None, *, sym_tol: float | None = RIEMANN_SYM_TOL):
    """Fully lowered Riemann tensor and the relative symmetrisation residual.

    The raw lowered tensor obeys the algebraic symmetries only up to the
    stencil's product-rule defect; it is projected onto the symmetric subspace
    and ``max|raw - projected| / max(|raw|, 1)`` is returned as the diagnostic.
    ``sym_tol=None`` disables the error.
    """
    if gamma is None:
        gamma = christoffel(metric)
    mixed = riemann_mixed(gamma, metric.grid)
    raw = np.einsum("...km,...ijlm->...ijkl", metric.g, mixed)
    sym = _curvature_projection(raw)
    scale = max(float(np.max(np.abs(raw))), 1.0)
    residual = float(np.max(np.abs(raw - sym))) / scale
    if sym_tol is not None and residual > sym_tol:
        raise CurvatureError(
            f"Riemann symmetry residual {residual:.2e} exceeds {sym_tol:.1e}; grid is under-resolved"
        )
    return sym, residual


def ricci_from_riemann(riem: np.ndarray, metric: Metric) -> np.ndarray:
    ric = np.einsum("...ik,...ijkl->...jl", metric.inv, riem)
    return 0.5 * (ric + np.swapaxes(ric, -1, -2))


def scalar_from_ricci(ric: np.ndarray, metric: Metric) -> np.ndarray:
    return np.einsum("...ij,...ij->...", metric.inv, ric)


@dataclass(frozen=True, eq=False)
class CurvaturePack:
    metric: Metric
    gamma: np.ndarray
    riem: np.ndarray
    ric: np.ndarray
    scalar: np.ndarray
    sym_residual: float

    @property
    def grid(self) -> Grid:
        return self.metric.grid


def curvature(metric: Metric, *, sym_tol: float | None = RIEMANN_SYM_TOL) -> CurvaturePack:
    gamma = christoffel(metric)
    riem, res = riemann(metric, gamma, sym_tol=sym_tol)
    ric = ricci_from_riemann(riem, metric)
    return CurvaturePack(metric, gamma, riem, ric, scalar_from_ricci(ric, metric), res)


def ricci(pack: CurvaturePack) -> np.ndarray:
    return pack.ric


def scalar_curv(pack: CurvaturePack) -> np.ndarray:
    return pack.scalar


def covariant_d(t: np.ndarray, gamma: np.ndarray, grid: Grid, variance: str = "") -> np.ndarray:
    """Covariant derivative ``nabla_k T``; the new index is prepended to the tensor axes.

    ``variance`` has one character per tensor slot, ``'l'`` (lower) or ``'u'``
    (upper); an empty string means a scalar.
    """
    rank = len(variance)
    if rank > 3:
        raise ValueError(f"covariant_d supports rank <= 3, got {rank}")
    if t.ndim != grid.dim + rank:
        raise ValueError(f"tensor has {t.ndim - grid.dim} tensor axes but variance {variance!r}")
    out = gradient(t, grid)
    letters = string.ascii_lowercase[:rank]
    for s, kind in enumerate(variance):
        replaced = letters[:s] + "p" + letters[s + 1 :]
        if kind == "l":
            out = out - np.einsum(f"...pk{letters[s]},...{replaced}->...k{letters}", gamma, t)
        elif kind == "u":
            out = out + np.einsum(f"...{letters[s]}kp,...{replaced}->...k{letters}", gamma, t)
        else:
            raise ValueError(f"bad variance character {kind!r}")
    return out


def hessian(f: np.ndarray, gamma: np.ndarray, grid: Grid) -> np.ndarray:
    h = covariant_d(gradient(f, grid), gamma, grid, "l")
    return 0.5 * (h + np.swapaxes(h, -1, -2))


def laplacian_scalar(f: np.ndarray, metric: Metric, gamma: np.ndarray | None = None) -> np.ndarray:
    if gamma is None:
        gamma = christoffel(metric)
    return np.einsum("...ij,...ij->...", metric.inv, hessian(f, gamma, metric.grid))


def laplacian_sym2(v: np.ndarray, metric: Metric, gamma: np.ndarray | None = None) -> np.ndarray:
    if gamma is None:
        gamma = christoffel(metric)
    grid = metric.grid
    dd = covariant_d(covariant_d(v, gamma, grid, "ll"), gamma, grid, "lll")
    return np.einsum("...kl,...klij->...ij", metric.inv, dd)


def trace(v: np.ndarray, metric: Metric) -> np.ndarray:
    return np.einsum("...ij,...ij->...", metric.inv, v)


def div_sym2(v: np.ndarray, metric: Metric, gamma: np.ndarray | None = None) -> np.ndarray:
    """``(div v)_i = nabla^j v_ij``."""
    if gamma is None:
        gamma = christoffel(metric)
    dv = covariant_d(v, gamma, metric.grid, "ll")  # [k, i, j]
    return np.einsum("...kj,...kij->...i", metric.inv, dv)


def inner2(v: np.ndarray, w: np.ndarray, metric: Metric) -> np.ndarray:
    return np.einsum("...ik,...jl,...ij,...kl->...", metric.inv, metric.inv, v, w)


def grad_norm2(f: np.ndarray, metric: Metric) -> np.ndarray:
    df = gradient(f, metric.grid)
    return np.einsum("...ij,...i,...j->...", metric.inv, df, df)


def raise_both(t: np.ndarray, metric: Metric) -> np.ndarray:
    return np.einsum("...ia,...jb,...ab->...ij", metric.inv, metric.inv, t)


def divergence_vector(w_up: np.ndarray, gamma: np.ndarray, grid: Grid) -> np.ndarray:
    """``nabla_k W^k`` for a vector field."""
    return np.einsum("...kk->...", covariant_d(w_up, gamma, grid, "u"))
