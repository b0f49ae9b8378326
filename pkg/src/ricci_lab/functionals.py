"""The S tensor, the scalar F, their time derivatives and the integrals I_n.

``I_n = int F^n dF/dt dmu`` is evaluated two ways:

* :func:`i_n_direct` integrates ``F^n`` against the pointwise ``dF/dt``;
* :func:`i_n_expression` evaluates the seven integrated-by-parts addends.

The two differ exactly by the discrete integration-by-parts defects returned
by :func:`ibp_residual`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .flow import FlowConfig, FlowError, FlowState, list_rhs
from .grid import gradient, integrate, pairwise_sum
from .tensor_calc import (
    CurvaturePack,
    covariant_d,
    curvature,
    grad_norm2,
    hessian,
    laplacian_scalar,
    raise_both,
)
from .variation import VariationPair, d_christoffel

TERM_ORDER = (
    "dirichlet",
    "s_coupling_gradient",
    "s_divergence",
    "entropy",
    "s_potential",
    "ds_coupling",
    "gamma",
)


@dataclass(frozen=True, eq=False)
class STensor:
    s_ij: np.ndarray
    s: np.ndarray


def _pack(state: FlowState, pack: CurvaturePack | None) -> CurvaturePack:
    return pack if pack is not None else curvature(state.metric, sym_tol=None)


def s_tensor(state: FlowState, pack: CurvaturePack | None = None) -> STensor:
    """``S_ij = R_ij - d_iPhi d_jPhi`` and its trace ``S = R - |grad Phi|^2``."""
    pack = _pack(state, pack)
    dphi = gradient(state.phi, state.grid)
    s_ij = pack.ric - np.einsum("...i,...j->...ij", dphi, dphi)
    return STensor(s_ij, pack.scalar - grad_norm2(state.phi, state.metric))


def _check_u(state: FlowState, config: FlowConfig):
    if np.min(state.u) <= config.u_floor:
        node = np.unravel_index(np.argmin(state.u), state.u.shape)
        raise FlowError(
            f"u = {state.u[node]:.3e} <= u_floor at node {tuple(int(i) for i in node)}; log u undefined"
        )


def f_quantity(state: FlowState, config: FlowConfig, pack: CurvaturePack | None = None) -> np.ndarray:
    """``F = -Delta u + a u log u + B S u`` (``f_variant="intro"`` swaps ``-Delta u`` for ``u``)."""
    _check_u(state, config)
    pack = _pack(state, pack)
    u = state.u
    s = s_tensor(state, pack).s
    lead = u if config.f_variant == "intro" else -laplacian_scalar(u, state.metric, pack.gamma)
    return lead + config.a * u * np.log(u) + config.B * s * u


def ds_dt_terms(state: FlowState, pack: CurvaturePack | None = None) -> dict[str, np.ndarray]:
    """The six printed addends of ``dS/dt`` under the ungauged flow."""
    pack = _pack(state, pack)
    m, grid, gam = state.metric, state.grid, pack.gamma
    dphi = gradient(state.phi, grid)
    hess = hessian(state.phi, gam, grid)
    lap_phi = np.einsum("...ij,...ij->...", m.inv, hess)
    grad_norm = np.einsum("...ij,...i,...j->...", m.inv, dphi, dphi)
    return {
        "laplacian_R": laplacian_scalar(pack.scalar, m, gam),
        "ric_sq": 2.0 * np.einsum("...ij,...ij->...", raise_both(pack.ric, m), pack.ric),
        "hess_sq": -2.0 * np.einsum("...ij,...ij->...", raise_both(hess, m), hess),
        "lap_phi_sq": 2.0 * lap_phi**2,
        "grad_lap_phi": -2.0 * np.einsum("...ij,...i,...j->...", m.inv, gradient(lap_phi, grid), dphi),
        "grad_phi_quartic": -4.0 * grad_norm**2,
    }


def ds_dt(state: FlowState, pack: CurvaturePack | None = None) -> np.ndarray:
    return sum(ds_dt_terms(state, pack).values())


@dataclass(frozen=True, eq=False)
class FState:
    """Everything the F-based expressions share, computed once per state."""

    state: FlowState
    config: FlowConfig
    pack: CurvaturePack
    S: STensor
    F: np.ndarray
    dS: np.ndarray
    dgamma: np.ndarray
    extra: dict = field(default_factory=dict)


def prepare(state: FlowState, config: FlowConfig, ds_override: np.ndarray | None = None) -> FState:
    """Shared ingredients; ``ds_override`` replaces the printed ``dS/dt`` (e.g. by an oracle)."""
    pack = curvature(state.metric, sym_tol=None)
    dg, _ = list_rhs(state, pack)
    dgamma = d_christoffel(VariationPair(state.metric, dg))
    ds = ds_dt(state, pack) if ds_override is None else ds_override
    return FState(state, config, pack, s_tensor(state, pack), f_quantity(state, config, pack), ds, dgamma)


def df_dt_terms(fs: FState) -> dict[str, np.ndarray]:
    """The printed ``dF/dt`` (with ``du/dt = -F``), one entry per addend."""
    st, cfg, pack = fs.state, fs.config, fs.pack
    m, grid, gam = st.metric, st.grid, pack.gamma
    u, F = st.u, fs.F
    du = gradient(u, grid)
    s_up = raise_both(fs.S.s_ij, m)
    trace_dgamma = np.einsum("...ij,...kij->...k", m.inv, fs.dgamma)
    trace_gamma = np.einsum("...ij,...kij->...k", m.inv, gam)
    return {
        "laplacian_F": laplacian_scalar(F, m, gam),
        "s_hess_u": -2.0 * np.einsum("...ij,...ij->...", s_up, hessian(u, gam, grid)),
        "entropy": -cfg.a * F * (np.log(u) + 1.0),
        "ds_coupling": cfg.B * fs.dS * u,
        "s_potential": -cfg.B * fs.S.s * F,
        "gamma_dgamma": np.einsum("...k,...k->...", trace_dgamma, du),
        "gamma_grad_f": -np.einsum("...k,...k->...", trace_gamma, gradient(F, grid)),
    }


def df_dt(fs: FState) -> np.ndarray:
    return sum(df_dt_terms(fs).values())


def term_coefficients(n: int, a: float, B: float) -> dict[str, float]:
    """Leading coefficients of the seven addends of ``I_n``.

    For n = 5 and n = 7 these are the printed ones; other n follow the same
    rule ``(-n, 2n, 2, -a, -B, +B, 1)`` and are checked only against the direct
    integral.
    """
    return {
        "dirichlet": float(-n),
        "s_coupling_gradient": float(2 * n),
        "s_divergence": 2.0,
        "entropy": -a,
        "s_potential": -B,
        "ds_coupling": B,
        "gamma": 1.0,
    }


def term_formulas(n: int) -> dict[str, str]:
    """Human-readable integrands, coefficient symbols included."""
    p, q = n - 1, n + 1
    return {
        "dirichlet": f"-{n} ∫ F^{p} (∇_i F)(∇^i F) dμ",
        "s_coupling_gradient": f"{2 * n} ∫ F^{p} (∇_i F) S^ij ∇_j u dμ",
        "s_divergence": f"2 ∫ F^{n} (∇_i S^ij) ∇_j u dμ",
        "entropy": f"-a ∫ F^{q} (log u + 1) dμ",
        "s_potential": f"-B ∫ F^{q} S dμ",
        "ds_coupling": f"B ∫ F^{n} ((∂S/∂t) u) dμ",
        "gamma": f"∫ F^{n} g^ij (∂Γ^k_ij/∂t ∇_k u - Γ^k_ij ∇_k F) dμ",
    }


@dataclass(frozen=True)
class FunctionalTerms:
    n: int
    values: dict[str, float]
    coefficients: dict[str, float]
    formulas: dict[str, str]

    @property
    def total(self) -> float:
        return pairwise_sum(np.array([self.values[k] for k in TERM_ORDER]))


def _div_s_up(fs: FState) -> np.ndarray:
    """``(nabla_i S^ij)``, a vector."""
    s_up = raise_both(fs.S.s_ij, fs.state.metric)
    ds_up = covariant_d(s_up, fs.pack.gamma, fs.state.grid, "uu")  # [k, i, j]
    return np.einsum("...iij->...j", ds_up)


def i_n_direct(fs: FState, n: int) -> float:
    return integrate(fs.F**n * df_dt(fs), fs.state.metric)


def i_n_expression(fs: FState, n: int) -> FunctionalTerms:
    if n < 1:
        raise ValueError("n must be a positive integer")
    st, cfg = fs.state, fs.config
    m, grid, gam = st.metric, st.grid, fs.pack.gamma
    F, u = fs.F, st.u
    coef = term_coefficients(n, cfg.a, cfg.B)
    dF = gradient(F, grid)
    du = gradient(u, grid)
    s_up = raise_both(fs.S.s_ij, m)
    trace_dgamma = np.einsum("...ij,...kij->...k", m.inv, fs.dgamma)
    trace_gamma = np.einsum("...ij,...kij->...k", m.inv, gam)
    Fp = F ** (n - 1)
    integrands = {
        "dirichlet": Fp * np.einsum("...ij,...i,...j->...", m.inv, dF, dF),
        "s_coupling_gradient": Fp * np.einsum("...i,...ij,...j->...", dF, s_up, du),
        "s_divergence": F**n * np.einsum("...j,...j->...", _div_s_up(fs), du),
        "entropy": F ** (n + 1) * (np.log(u) + 1.0),
        "s_potential": F ** (n + 1) * fs.S.s,
        "ds_coupling": F**n * fs.dS * u,
        "gamma": F**n * (np.einsum("...k,...k->...", trace_dgamma, du) - np.einsum("...k,...k->...", trace_gamma, dF)),
    }
    values = {k: coef[k] * integrate(integrands[k], m) for k in TERM_ORDER}
    return FunctionalTerms(n, values, coef, term_formulas(n))


def ibp_residual(fs: FState, n: int) -> dict[str, float]:
    """Discrete integration-by-parts defects behind the ``I_n`` expansion.

    ``laplacian``: ``int F^n Delta F + n int F^(n-1) |grad F|^2``;
    ``s_term``: ``int F^n S^ij u_;ij + int nabla_i(F^n S^ij) nabla_j u`` with the
    product rule expanded as in the expansion. ``bound`` is what the direct and
    expanded ``I_n`` may differ by.
    """
    st = fs.state
    m, grid, gam = st.metric, st.grid, fs.pack.gamma
    F, u = fs.F, st.u
    dF = gradient(F, grid)
    du = gradient(u, grid)
    s_up = raise_both(fs.S.s_ij, m)
    lap = integrate(F**n * laplacian_scalar(F, m, gam), m) + n * integrate(
        F ** (n - 1) * np.einsum("...ij,...i,...j->...", m.inv, dF, dF), m
    )
    s_term = integrate(F**n * np.einsum("...ij,...ij->...", s_up, hessian(u, gam, grid)), m) + integrate(
        n * F ** (n - 1) * np.einsum("...i,...ij,...j->...", dF, s_up, du)
        + F**n * np.einsum("...j,...j->...", _div_s_up(fs), du),
        m,
    )
    return {"laplacian": lap, "s_term": s_term, "bound": abs(lap) + 2.0 * abs(s_term)}
