"""Extended Ricci flow (List's flow) with optional DeTurck gauge, plus RK4 stepping.

The coupled system evolved here is::

    dg/dt   = -2 Ric + 2 dPhi (x) dPhi  [+ nabla_i W_j + nabla_j W_i]
    dPhi/dt = Delta Phi                 [+ W^k d_k Phi]
    du/dt   = -F

with ``W^k = g^pq (Gamma^k_pq - refGamma^k_pq)`` in the gauged case.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .grid import Grid, gradient
from .metric import DEFAULT_SPD_FLOOR, Metric, MetricError, flat_metric
from .tensor_calc import (
    CurvaturePack,
    christoffel,
    covariant_d,
    curvature,
    hessian,
    laplacian_scalar,
    laplacian_sym2,
    raise_both,
)

GAUGES = ("plain", "deturck")
REFERENCES = ("initial", "flat")
F_VARIANTS = ("theorem", "intro")


class FlowError(RuntimeError):
    pass


@dataclass(frozen=True)
class FlowConfig:
    a: float = 0.0
    B: float = 0.0
    gauge: str = "plain"
    reference: Metric | None = None
    c_cfl: float = 0.1
    u_floor: float = 1e-8
    spd_floor: float = DEFAULT_SPD_FLOOR
    max_steps: int = 10_000
    frozen_geometry: bool = False
    f_variant: str = "theorem"

    def __post_init__(self):
        if self.gauge not in GAUGES:
            raise ValueError(f"gauge must be one of {GAUGES}, got {self.gauge!r}")
        if not 0.0 < self.c_cfl <= 0.5:
            raise ValueError(f"c_cfl must lie in (0, 0.5], got {self.c_cfl}")
        if self.u_floor <= 0.0:
            raise ValueError("u_floor must be positive")
        if self.f_variant not in F_VARIANTS:
            raise ValueError(f"f_variant must be one of {F_VARIANTS}")


@dataclass(frozen=True, eq=False)
class FlowState:
    t: float
    metric: Metric
    phi: np.ndarray
    u: np.ndarray

    @property
    def grid(self) -> Grid:
        return self.metric.grid

    def validate(self, config: FlowConfig) -> "FlowState":
        shape = self.grid.shape
        if self.phi.shape != shape or self.u.shape != shape:
            raise FlowError("phi and u must live on the metric's grid")
        if not (np.all(np.isfinite(self.phi)) and np.all(np.isfinite(self.u))):
            raise FlowError(f"non-finite scalar field at t={self.t:.6g}")
        if np.min(self.u) <= config.u_floor:
            node = np.unravel_index(np.argmin(self.u), shape)
            raise FlowError(
                f"u fell to {self.u[node]:.3e} <= u_floor {config.u_floor:.1e} "
                f"at node {tuple(int(i) for i in node)}, t={self.t:.6g}"
            )
        return self


def make_state(grid: Grid, g: np.ndarray, phi: np.ndarray, u: np.ndarray, config: FlowConfig | None = None, t=0.0):
    config = config or FlowConfig()
    return FlowState(float(t), Metric(grid, g, config.spd_floor), np.asarray(phi, float), np.asarray(u, float)).validate(config)


def with_reference(config: FlowConfig, state: FlowState, kind: str = "initial") -> FlowConfig:
    """Pin the DeTurck reference metric to the state's metric or to the flat metric."""
    if kind not in REFERENCES:
        raise ValueError(f"reference must be one of {REFERENCES}")
    ref = state.metric if kind == "initial" else flat_metric(state.grid)
    return replace(config, reference=ref)


def time_step(state: FlowState, config: FlowConfig) -> float:
    """``c_cfl h_min^2 / max |g^-1|_inf``."""
    h = min(state.grid.spacing)
    ginv_norm = float(np.max(np.sum(np.abs(state.metric.inv), axis=-1)))
    return config.c_cfl * h * h / ginv_norm


def _sym(t: np.ndarray) -> np.ndarray:
    return 0.5 * (t + np.swapaxes(t, -1, -2))


def list_rhs(state: FlowState, pack: CurvaturePack | None = None):
    """Ungauged right-hand sides ``(-2 Ric + 2 dPhi dPhi, Delta Phi)``."""
    pack = pack or curvature(state.metric, sym_tol=None)
    dphi = gradient(state.phi, state.grid)
    dg = _sym(-2.0 * pack.ric + 2.0 * np.einsum("...i,...j->...ij", dphi, dphi))
    return dg, laplacian_scalar(state.phi, state.metric, pack.gamma)


def deturck_field(metric: Metric, reference: Metric, gamma=None, ref_gamma=None) -> np.ndarray:
    """``W^k = g^pq (Gamma^k_pq - refGamma^k_pq)``."""
    gamma = christoffel(metric) if gamma is None else gamma
    ref_gamma = christoffel(reference) if ref_gamma is None else ref_gamma
    return np.einsum("...pq,...kpq->...k", metric.inv, gamma - ref_gamma)


def _reference(config: FlowConfig, state: FlowState) -> Metric:
    if config.reference is None:
        raise FlowError("the DeTurck gauge needs a reference metric; see with_reference()")
    return config.reference


def deturck_rhs(state: FlowState, config: FlowConfig, pack: CurvaturePack | None = None):
    pack = pack or curvature(state.metric, sym_tol=None)
    dg, dphi_t = list_rhs(state, pack)
    w_up = deturck_field(state.metric, _reference(config, state), pack.gamma)
    w_low = np.einsum("...jk,...k->...j", state.metric.g, w_up)
    nabla_w = covariant_d(w_low, pack.gamma, state.grid, "l")  # [i, j] = nabla_i W_j
    dg = dg + (nabla_w + np.swapaxes(nabla_w, -1, -2))
    dphi_t = dphi_t + np.einsum("...k,...k->...", w_up, gradient(state.phi, state.grid))
    return _sym(dg), dphi_t


def metric_rhs(state: FlowState, config: FlowConfig, pack: CurvaturePack | None = None):
    if config.gauge == "deturck":
        return deturck_rhs(state, config, pack)
    return list_rhs(state, pack)


def du_dt(state: FlowState, config: FlowConfig, pack: CurvaturePack | None = None) -> np.ndarray:
    from .functionals import f_quantity

    return -f_quantity(state, config, pack)


def full_rhs(state: FlowState, config: FlowConfig):
    pack = curvature(state.metric, sym_tol=None)
    dg, dphi = metric_rhs(state, config, pack)
    if config.frozen_geometry:
        dg = np.zeros_like(dg)
    return dg, dphi, du_dt(state, config, pack)


def _advance(state: FlowState, k, h: float, config: FlowConfig) -> FlowState:
    dg, dphi, du = k
    try:
        metric = Metric(state.grid, state.metric.g + h * dg, config.spd_floor)
    except MetricError as exc:
        raise FlowError(f"metric lost positive definiteness at t={state.t + h:.6g}: {exc}") from exc
    return FlowState(state.t + h, metric, state.phi + h * dphi, state.u + h * du)


def step_rk4(state: FlowState, config: FlowConfig, dt: float | None = None) -> FlowState:
    """One classical RK4 step of ``(g, Phi, u)``; invariants are revalidated afterwards."""
    dt = time_step(state, config) if dt is None else dt
    k1 = full_rhs(state, config)
    k2 = full_rhs(_advance(state, k1, 0.5 * dt, config).validate(config), config)
    k3 = full_rhs(_advance(state, k2, 0.5 * dt, config).validate(config), config)
    k4 = full_rhs(_advance(state, k3, dt, config).validate(config), config)
    combo = tuple((a + 2.0 * b + 2.0 * c + d) / 6.0 for a, b, c, d in zip(k1, k2, k3, k4))
    combo = (_sym(combo[0]),) + combo[1:]
    return _advance(state, combo, dt, config).validate(config)


def integrate_flow(state: FlowState, config: FlowConfig, steps: int, dt: float | None = None):
    """Take ``steps`` RK4 steps with a fixed dt (default: the policy dt at the start)."""
    if steps > config.max_steps:
        raise FlowError(f"{steps} steps requested, max_steps is {config.max_steps}")
    dt = time_step(state, config) if dt is None else dt
    states = [state]
    for _ in range(steps):
        states.append(step_rk4(states[-1], config, dt))
    return states


# --- curvature evolution right-hand sides ----------------------------------------


def _w_pieces(state: FlowState, config: FlowConfig, pack: CurvaturePack):
    grid = state.grid
    if config.gauge == "deturck":
        w_up = deturck_field(state.metric, _reference(config, state), pack.gamma)
    else:
        w_up = np.zeros(grid.shape + (grid.dim,))
    nabla_w_up = covariant_d(w_up, pack.gamma, grid, "u")  # [i, k] = nabla_i W^k
    return w_up, nabla_w_up


def ricci_evolution_terms(state: FlowState, config: FlowConfig, pack: CurvaturePack | None = None) -> dict:
    """The printed ``dR_ij/dt`` right-hand side, one entry per addend."""
    pack = pack or curvature(state.metric, sym_tol=None)
    m, grid, gam = state.metric, state.grid, pack.gamma
    dphi = gradient(state.phi, grid)
    dphi_up = np.einsum("...ij,...j->...i", m.inv, dphi)
    hess = hessian(state.phi, gam, grid)
    lap_phi = np.einsum("...ij,...ij->...", m.inv, hess)
    grad_lap = gradient(lap_phi, grid)
    ric_up = raise_both(pack.ric, m)
    w_up, nabla_w_up = _w_pieces(state, config, pack)
    w_low = np.einsum("...jk,...k->...j", m.g, w_up)
    nabla_w_low = covariant_d(w_low, gam, grid, "l")
    # Q = div W - 1/2 tr_g(nabla W)
    q = np.einsum("...kk->...", nabla_w_up) - 0.5 * np.einsum("...ij,...ij->...", m.inv, nabla_w_low)
    nabla_ric = covariant_d(pack.ric, gam, grid, "ll")  # [i, j, k]
    grad_norm = np.einsum("...ij,...i,...j->...", m.inv, dphi, dphi)
    cross = np.einsum("...i,...j->...ij", dphi, grad_lap)
    stretch = np.einsum("...ik,...jk->...ij", pack.ric, nabla_w_up)
    transport = np.einsum("...ijk,...k->...ij", nabla_ric, w_up)
    return {
        "laplacian_ric": laplacian_sym2(pack.ric, m, gam),
        "riem_ric": 2.0 * np.einsum("...ikjl,...kl->...ij", pack.riem, ric_up),
        "riem_dphi": -2.0 * np.einsum("...k,...l,...ikjl->...ij", dphi_up, dphi_up, pack.riem),
        "hess_sq": -2.0 * np.einsum("...ia,...ak,...jk->...ij", hess, m.inv, hess),
        "dphi_grad_lap": 2.0 * (cross + np.swapaxes(cross, -1, -2)),
        "hess_grad_norm": -hessian(grad_norm, gam, grid),
        "hess_q": hessian(q, gam, grid),
        "w_transport": -(transport + np.swapaxes(transport, -1, -2)),
        "w_stretch": stretch + np.swapaxes(stretch, -1, -2),
    }


def scalar_evolution_terms(state: FlowState, config: FlowConfig, pack: CurvaturePack | None = None) -> dict:
    """The printed ``dR/dt`` right-hand side, one entry per addend."""
    pack = pack or curvature(state.metric, sym_tol=None)
    m, grid, gam = state.metric, state.grid, pack.gamma
    dphi = gradient(state.phi, grid)
    hess = hessian(state.phi, gam, grid)
    hess_up = raise_both(hess, m)
    ric_up = raise_both(pack.ric, m)
    lap_phi = np.einsum("...ij,...ij->...", m.inv, hess)
    w_up, _ = _w_pieces(state, config, pack)
    return {
        "laplacian_R": laplacian_scalar(pack.scalar, m, gam),
        "ric_sq": 2.0 * np.einsum("...ij,...ij->...", ric_up, pack.ric),
        "ric_dphi": -4.0 * np.einsum("...ij,...i,...j->...", ric_up, dphi, dphi),
        "hess_sq": -2.0 * np.einsum("...ij,...ij->...", hess_up, hess),
        "lap_phi_sq": 2.0 * lap_phi**2,
        "lie_w_R": np.einsum("...k,...k->...", w_up, gradient(pack.scalar, grid)),
    }


def ricci_evolution_rhs(state: FlowState, config: FlowConfig, pack: CurvaturePack | None = None) -> np.ndarray:
    return sum(ricci_evolution_terms(state, config, pack).values())


def scalar_evolution_rhs(state: FlowState, config: FlowConfig, pack: CurvaturePack | None = None) -> np.ndarray:
    return sum(scalar_evolution_terms(state, config, pack).values())
