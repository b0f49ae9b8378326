"""First variations of the Levi-Civita geometry along a metric direction ``v``.

Each ``d_*`` function is the analytic variation written with covariant
derivatives of ``v``; :func:`fd_variation_oracle` recomputes the underlying
quantity on ``g +- eps v`` (and ``Phi +- eps dPhi``) and differentiates
numerically, so every formula has an independent check.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import gradient
from .metric import Metric, MetricError
from .tensor_calc import (
    christoffel,
    covariant_d,
    curvature,
    div_sym2,
    hessian,
    inner2,
    laplacian_scalar,
    trace,
)

DEFAULT_EPS = (1e-3, 1e-4, 1e-5)


class EpsilonTooLarge(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class VariationPair:
    """A metric ``g`` and a symmetric direction ``v = dg/dt``.

    ``phi`` and ``dphi`` (the scalar field and its time derivative) are only
    needed by the Hessian and Laplacian variations.
    """

    metric: Metric
    v: np.ndarray
    phi: np.ndarray | None = None
    dphi: np.ndarray | None = None
    gamma: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if np.max(np.abs(self.v - np.swapaxes(self.v, -1, -2))) > 0.0:
            raise ValueError("variation direction must be symmetric")
        object.__setattr__(self, "gamma", christoffel(self.metric))

    @property
    def grid(self):
        return self.metric.grid

    @property
    def eps_max(self) -> float:
        """Largest eps keeping ``g +- eps v`` SPD with half the eigenvalue margin to spare."""
        v_norm = float(np.max(np.abs(np.linalg.eigvalsh(self.v))))
        if v_norm == 0.0:
            return np.inf
        lam_min = float(np.min(np.linalg.eigvalsh(self.metric.g)[..., 0]))
        return 0.5 * lam_min / v_norm


def _cov_v(pair: VariationPair) -> np.ndarray:
    return covariant_d(pair.v, pair.gamma, pair.grid, "ll")  # [c, a, b] = nabla_c v_ab


def d_christoffel(pair: VariationPair) -> np.ndarray:
    dv = _cov_v(pair)
    x = 0.5 * (
        np.einsum("...ijp->...pij", dv) + np.einsum("...jip->...pij", dv) - dv
    )
    return np.einsum("...kp,...pij->...kij", pair.metric.inv, x)


def d_riemann(pair: VariationPair, pack=None) -> np.ndarray:
    """Variation of the fully lowered ``R_ijkl``, including the lowering terms."""
    pack = pack or curvature(pair.metric, sym_tol=None)
    ddv = covariant_d(_cov_v(pair), pair.gamma, pair.grid, "lll")  # [a, b, c, e]
    second = 0.5 * (
        np.einsum("...jkil->...ijkl", ddv)
        + np.einsum("...iljk->...ijkl", ddv)
        - np.einsum("...ikjl->...ijkl", ddv)
        - np.einsum("...jlik->...ijkl", ddv)
    )
    r_v = np.einsum("...ijkq,...qp,...pl->...ijkl", pack.riem, pair.metric.inv, pair.v)
    return second + 0.5 * r_v - 0.5 * np.einsum("...ijkl->...ijlk", r_v)


def d_ricci(pair: VariationPair, pack=None) -> np.ndarray:
    pack = pack or curvature(pair.metric, sym_tol=None)
    m, gam, grid = pair.metric, pair.gamma, pair.grid
    ddv = covariant_d(_cov_v(pair), gam, grid, "lll")
    rough = np.einsum("...pa,...akip->...ik", m.inv, ddv)
    div_v = div_sym2(pair.v, m, gam)
    grad_div = covariant_d(div_v, gam, grid, "l")  # [i, k] = nabla_i (div v)_k
    hess_tr = hessian(trace(pair.v, m), gam, grid)
    lap_v = np.einsum("...ab,...abik->...ik", m.inv, ddv)
    ric_v = np.einsum("...ia,...ap,...pk->...ik", pack.ric, m.inv, pair.v)
    v_up = np.einsum("...ap,...bq,...pq->...ab", m.inv, m.inv, pair.v)
    riem_v = np.einsum("...iakb,...ab->...ik", pack.riem, v_up)
    out = 0.5 * (rough + grad_div - hess_tr - lap_v) + 0.5 * ric_v - 0.5 * riem_v
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def d_scalar(pair: VariationPair, pack=None) -> np.ndarray:
    pack = pack or curvature(pair.metric, sym_tol=None)
    m, gam, grid = pair.metric, pair.gamma, pair.grid
    div_v = div_sym2(pair.v, m, gam)
    divdiv = np.einsum("...ik,...ki->...", m.inv, covariant_d(div_v, gam, grid, "l"))
    lap_tr = laplacian_scalar(trace(pair.v, m), m, gam)
    return divdiv - lap_tr - inner2(pair.v, pack.ric, m)


def d_volume(pair: VariationPair) -> np.ndarray:
    """Density factor: ``d(dmu)/dt = (1/2 tr_g v) dmu``."""
    return 0.5 * trace(pair.v, pair.metric)


def _require_phi(pair: VariationPair):
    if pair.phi is None or pair.dphi is None:
        raise ValueError("this variation needs phi and dphi on the pair")


def d_hessian(pair: VariationPair) -> np.ndarray:
    _require_phi(pair)
    dgam = d_christoffel(pair)
    dphi_x = gradient(pair.phi, pair.grid)
    return hessian(pair.dphi, pair.gamma, pair.grid) - np.einsum("...kij,...k->...ij", dgam, dphi_x)


def d_laplacian_parts(pair: VariationPair) -> dict[str, np.ndarray]:
    """The metric-variation part (as printed) and the ``Delta(dPhi/dt)`` part, separately."""
    _require_phi(pair)
    m, gam, grid = pair.metric, pair.gamma, pair.grid
    hess_phi = hessian(pair.phi, gam, grid)
    # d(tr_g v) contracted after differentiating: equal to d of the trace by
    # metric compatibility, and the discrete form that commutes with the stencil
    dtr = np.einsum("...ab,...kab->...k", m.inv, _cov_v(pair))
    w = div_sym2(pair.v, m, gam) - 0.5 * dtr
    dphi_x = gradient(pair.phi, grid)
    metric_part = -inner2(pair.v, hess_phi, m) - np.einsum("...ij,...i,...j->...", m.inv, w, dphi_x)
    return {"metric": metric_part, "scalar": laplacian_scalar(pair.dphi, m, gam)}


def d_laplacian(pair: VariationPair) -> np.ndarray:
    parts = d_laplacian_parts(pair)
    return parts["metric"] + parts["scalar"]


# --- finite-difference oracle -------------------------------------------------

QUANTITIES = ("christoffel", "riemann", "ricci", "scalar", "volume", "hessian", "laplacian")

ANALYTIC = {
    "christoffel": d_christoffel,
    "riemann": d_riemann,
    "ricci": d_ricci,
    "scalar": d_scalar,
    "volume": d_volume,
    "hessian": d_hessian,
    "laplacian": d_laplacian,
}


def _recompute(tag: str, metric: Metric, phi: np.ndarray | None) -> np.ndarray:
    if tag == "christoffel":
        return christoffel(metric)
    if tag == "volume":
        return metric.sqrt_det
    if tag == "hessian":
        return hessian(phi, christoffel(metric), metric.grid)
    if tag == "laplacian":
        return laplacian_scalar(phi, metric)
    pack = curvature(metric, sym_tol=None)
    return {"riemann": pack.riem, "ricci": pack.ric, "scalar": pack.scalar}[tag]


def _shifted(pair: VariationPair, tag: str, eps: float) -> np.ndarray:
    try:
        m = pair.metric.perturbed(pair.v, eps)
    except MetricError as exc:
        raise EpsilonTooLarge(f"eps too large: g + ({eps:g}) v is not SPD ({exc})") from exc
    phi = None
    if tag in ("hessian", "laplacian"):
        _require_phi(pair)
        phi = pair.phi + eps * pair.dphi
    return _recompute(tag, m, phi)


def central_difference(pair: VariationPair, tag: str, eps: float) -> np.ndarray:
    d = (_shifted(pair, tag, eps) - _shifted(pair, tag, -eps)) / (2.0 * eps)
    if tag == "volume":
        d = d / pair.metric.sqrt_det
    return d


@dataclass
class OracleReport:
    tag: str
    eps: tuple[float, ...]
    limit: np.ndarray
    analytic: np.ndarray
    fd_errors: list[float]  # |D(eps) - limit|_inf / |limit|_inf per eps
    residuals: list[float]  # |D(eps) - analytic|_inf / |limit|_inf per eps
    rel_residual: float  # |limit - analytic|_inf / |limit|_inf
    eps_slope: float

    def as_dict(self) -> dict:
        return {
            "tag": self.tag,
            "eps": list(self.eps),
            "fd_errors": self.fd_errors,
            "residuals": self.residuals,
            "rel_residual": self.rel_residual,
            "eps_slope": self.eps_slope,
        }


def loglog_slope(x, y) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    ok = (x > 0) & (y > 0)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def fd_variation_oracle(tag: str, pair: VariationPair, eps_list=DEFAULT_EPS, scale: float | None = None):
    """Central differences on ``g +- eps v`` for each eps, plus a Richardson limit.

    ``eps`` values are multiplied by ``scale`` (default ``10 |g|_inf / |v|_inf``,
    which keeps the smallest step clear of the roundoff floor of second
    derivatives on desk-scale grids).  The limit is the Richardson combination
    of the central differences at the middle eps and twice it, accurate to
    O(eps^4); the eps-slope is fitted to ``|D(eps) - limit|`` over the sweep.
    """
    if tag not in ANALYTIC:
        raise ValueError(f"unknown quantity {tag!r}; expected one of {QUANTITIES}")
    if scale is None:
        vmax = float(np.max(np.abs(pair.v)))
        scale = 10.0 * float(np.max(np.abs(pair.metric.g))) / vmax if vmax else 1.0
    eps = tuple(float(e) * scale for e in eps_list)
    if max(eps) > pair.eps_max:
        raise EpsilonTooLarge(f"eps too large: {max(eps):.3e} exceeds the SPD-safe {pair.eps_max:.3e}")
    diffs = [central_difference(pair, tag, e) for e in eps]
    mid = sorted(eps)[len(eps) // 2]
    coarse = central_difference(pair, tag, 2 * mid)
    limit = (4.0 * diffs[eps.index(mid)] - coarse) / 3.0
    analytic = ANALYTIC[tag](pair)
    norm = float(np.max(np.abs(limit))) or 1.0
    fd_errors = [float(np.max(np.abs(d - limit))) / norm for d in diffs]
    residuals = [float(np.max(np.abs(d - analytic))) / norm for d in diffs]
    rel = float(np.max(np.abs(limit - analytic))) / norm
    return OracleReport(tag, eps, limit, analytic, fd_errors, residuals, rel, loglog_slope(eps, fd_errors))
