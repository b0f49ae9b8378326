"""Trajectory finite-difference oracles for evolution identities.

A short RK4 trajectory is integrated from sampled initial data, the tracked
quantity is differentiated in time with a 5-point stencil, and the printed
right-hand side (term by term) is subtracted. Repeating this on refined grids
(dt shrinks with h^2) separates discretisation error from formula error.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .flow import (
    FlowConfig,
    FlowState,
    integrate_flow,
    make_state,
    ricci_evolution_terms,
    scalar_evolution_terms,
    time_step,
    with_reference,
)
from .functionals import df_dt_terms, ds_dt_terms, f_quantity, prepare, s_tensor
from .grid import Grid
from .initial_data import InitialData
from .tensor_calc import curvature, hessian, laplacian_scalar, raise_both

CENTER = 2
STENCIL_OFFSETS = (-2, -1, 0, 1, 2)

EXACT_TOL = 1e-10
NOMINAL_ORDER = 3.5
NONCONVERGENT_ORDER = 1.0


def fd_weights(offsets, derivative: int = 1) -> np.ndarray:
    """Finite-difference weights on integer ``offsets`` (unit spacing)."""
    offsets = np.asarray(offsets, dtype=float)
    k = len(offsets)
    vander = np.vander(offsets, k, increasing=True).T
    rhs = np.zeros(k)
    rhs[derivative] = float(np.prod(np.arange(1, derivative + 1)))
    return np.linalg.solve(vander, rhs)


def time_derivative(samples, dt: float, index: int) -> np.ndarray:
    """4th-order derivative at ``samples[index]`` from 5 equally spaced samples."""
    if len(samples) != 5:
        raise ValueError("need exactly five time levels")
    w = fd_weights([i - index for i in range(5)])
    return sum(wi * s for wi, s in zip(w, samples)) / dt


def derivative_series(samples, dt: float) -> list:
    """4th-order d/dt at every sample, one-sided 5-point windows near the ends."""
    n = len(samples)
    if n < 5:
        raise ValueError("need at least five time levels")
    out = []
    for i in range(n):
        start = min(max(i - 2, 0), n - 5)
        out.append(time_derivative(samples[start : start + 5], dt, i - start))
    return out


@dataclass(frozen=True)
class IdentitySpec:
    """What to differentiate, which printed terms to compare with, and in which gauge.

    ``terms`` receives the five trajectory states, the step and the flow
    config; most identities only look at the centre state.
    """

    name: str
    quantity: Callable[[FlowState, FlowConfig], np.ndarray]
    terms: Callable[[list, float, FlowConfig], dict]
    gauge: str


def _at_center(fn):
    return lambda states, dt, cfg: fn(states[CENTER], cfg)


def _ricci_q(st, cfg):
    return curvature(st.metric, sym_tol=None).ric


def _scalar_q(st, cfg):
    return curvature(st.metric, sym_tol=None).scalar


def _s_q(st, cfg):
    return s_tensor(st).s


def _f_q(st, cfg):
    return f_quantity(st, cfg)


def _ds_terms(st, cfg):
    return ds_dt_terms(st)


def _df_terms(st, cfg):
    return df_dt_terms(prepare(st, cfg))


def _df_terms_ds_oracle(states, dt, cfg):
    """The printed dF/dt with dS/dt replaced by the time derivative of S along the run."""
    ds_fd = time_derivative([_s_q(s, cfg) for s in states], dt, CENTER)
    return df_dt_terms(prepare(states[CENTER], cfg, ds_override=ds_fd))


def _list_s_terms(st, cfg):
    """List's own evolution of S under the ungauged flow: a control identity."""
    pack = curvature(st.metric, sym_tol=None)
    m = st.metric
    S = s_tensor(st, pack)
    lap_phi = np.einsum("...ij,...ij->...", m.inv, hessian(st.phi, pack.gamma, st.grid))
    return {
        "laplacian_S": laplacian_scalar(S.s, m, pack.gamma),
        "s_sq": 2.0 * np.einsum("...ij,...ij->...", raise_both(S.s_ij, m), S.s_ij),
        "lap_phi_sq": 2.0 * lap_phi**2,
    }


IDENTITIES = {
    "thm1-ricci": IdentitySpec("thm1-ricci", _ricci_q, _at_center(ricci_evolution_terms), "deturck"),
    "thm1-scalar": IdentitySpec("thm1-scalar", _scalar_q, _at_center(scalar_evolution_terms), "deturck"),
    "ds-dt": IdentitySpec("ds-dt", _s_q, _at_center(_ds_terms), "plain"),
    "df-dt": IdentitySpec("df-dt", _f_q, _at_center(_df_terms), "plain"),
    "df-dt-ds-oracle": IdentitySpec("df-dt-ds-oracle", _f_q, _df_terms_ds_oracle, "plain"),
    "ds-dt-control": IdentitySpec("ds-dt-control", _s_q, _at_center(_list_s_terms), "plain"),
}


@dataclass
class TrajectoryLevel:
    grid: Grid
    dt: float
    fd: np.ndarray
    terms: dict
    residual: np.ndarray
    states: list

    @property
    def scale(self) -> float:
        return max(float(np.max(np.abs(self.fd))), float(max((np.max(np.abs(t)) for t in self.terms.values()), default=0.0)), 1e-300)

    @property
    def rel_linf(self) -> float:
        return float(np.max(np.abs(self.residual))) / self.scale


def run_level(
    identity: IdentitySpec,
    data: InitialData,
    grid: Grid,
    config: FlowConfig,
    reference: str = "initial",
    dt_factor: float = 1.0,
) -> TrajectoryLevel:
    cfg = replace(config, gauge=identity.gauge, frozen_geometry=False)
    g, phi, u = data.fields(grid)
    state = make_state(grid, g, phi, u, cfg)
    if cfg.gauge == "deturck":
        cfg = with_reference(cfg, state, reference)
    dt = time_step(state, cfg) * dt_factor
    states = integrate_flow(state, cfg, 4, dt)
    fd = time_derivative([identity.quantity(s, cfg) for s in states], dt, CENTER)
    terms = identity.terms(states, dt, cfg)
    residual = fd - sum(terms.values())
    return TrajectoryLevel(grid, dt, fd, terms, residual, states)


def observed_order(errors, ratio: float = 2.0) -> float | None:
    """Order from the last two entries; ``None`` if undefined (zero or missing)."""
    if len(errors) < 2 or errors[-1] <= 0.0 or errors[-2] <= 0.0:
        return None
    return float(np.log(errors[-2] / errors[-1]) / np.log(ratio))


def isolate_terms(residual: np.ndarray, terms: dict) -> dict:
    """Attribute a residual to individual printed terms.

    For each term, the best single rescaling ``alpha`` and the fraction of the
    residual (L2) it removes; plus the joint least-squares fit over all terms
    and whatever it leaves unexplained (i.e. a missing term).
    """
    r = residual.ravel()
    rn = float(np.linalg.norm(r))
    out = {"per_term": {}, "responsible": [], "unexplained_fraction": 0.0}
    if rn == 0.0:
        return out
    cols, names = [], []
    for name, t in terms.items():
        tv = t.ravel()
        tn = float(np.dot(tv, tv))
        if tn == 0.0:
            out["per_term"][name] = {"alpha": 0.0, "explained": 0.0}
            continue
        alpha = float(np.dot(r, tv) / tn)
        explained = 1.0 - float(np.linalg.norm(r - alpha * tv)) / rn
        out["per_term"][name] = {"alpha": alpha, "explained": explained}
        cols.append(tv)
        names.append(name)
    if cols:
        A = np.stack(cols, axis=1)
        coef, *_ = np.linalg.lstsq(A, r, rcond=None)
        out["unexplained_fraction"] = float(np.linalg.norm(r - A @ coef)) / rn
        out["joint_alpha"] = {n: float(c) for n, c in zip(names, coef)}
    ranked = sorted(out["per_term"].items(), key=lambda kv: -kv[1]["explained"])
    out["responsible"] = [name for name, v in ranked if v["explained"] >= 0.5]
    if not out["responsible"] and ranked and ranked[0][1]["explained"] > 0.1:
        out["responsible"] = [ranked[0][0]]
    return out


def verdict_from_orders(final_rel: float, p_h: float | None, p_other: float | None) -> str:
    """verified / discretization-limited / formula-discrepancy.

    ``p_h`` is the observed order under spatial (joint) refinement and
    ``p_other`` the order in the other refinement parameter (dt or eps). A
    formula discrepancy needs a residual that converges in neither.
    """
    if final_rel <= EXACT_TOL:
        return "verified"
    if p_h is not None and p_h >= NOMINAL_ORDER:
        return "verified"
    h_stalled = p_h is not None and p_h < NONCONVERGENT_ORDER
    other_stalled = p_other is None or p_other < NONCONVERGENT_ORDER
    if h_stalled and other_stalled:
        return "formula-discrepancy"
    return "discretization-limited"


def classify(h_errors, dt_errors) -> str:
    """Verdict from residuals under joint (dt, h) halving and dt-only halving."""
    final = h_errors[-1] if h_errors else float("inf")
    return verdict_from_orders(final, observed_order(h_errors), observed_order(dt_errors))


def _norms(field: np.ndarray) -> dict:
    return {"linf": float(np.max(np.abs(field))), "l2": float(np.sqrt(np.mean(field**2)))}


def _restrict(field: np.ndarray, factor: int, dim: int) -> np.ndarray:
    return field[(slice(None, None, factor),) * dim]


def identity_check(
    name: str,
    data: InitialData,
    grid: Grid,
    config: FlowConfig,
    levels: int = 2,
    reference: str = "initial",
) -> dict:
    """Joint (dt, h) refinement plus a dt-only refinement on the finest grid."""
    identity = IDENTITIES[name]
    runs = [run_level(identity, data, grid.refined(2**k) if k else grid, config, reference) for k in range(levels)]
    finest = runs[-1]
    half_dt = run_level(identity, data, finest.grid, config, reference, dt_factor=0.5)
    h_errors = [r.rel_linf for r in runs]
    dt_errors = [finest.rel_linf, half_dt.rel_linf]
    terms_report = {label: _norms(t) for label, t in finest.terms.items()}
    terms_report["residual"] = _norms(finest.residual)
    # per-term self-convergence between the two finest grids, on shared nodes
    term_orders = {}
    if levels >= 3:
        for label in finest.terms:
            a = _restrict(runs[-1].terms[label], 4, grid.dim)
            b = _restrict(runs[-2].terms[label], 2, grid.dim)
            c = runs[-3].terms[label]
            e1, e2 = float(np.max(np.abs(c - b))), float(np.max(np.abs(b - a)))
            term_orders[label] = observed_order([e1, e2])
    verdict = classify(h_errors, dt_errors)
    report = {
        "terms": terms_report,
        "eps_slope": observed_order(dt_errors),
        "h_order": observed_order(h_errors),
        "verdict": verdict,
        "details": {
            "grids": [list(r.grid.n) for r in runs],
            "dt": [r.dt for r in runs],
            "rel_residual_h": h_errors,
            "rel_residual_dt": dt_errors,
            "term_self_convergence_order": term_orders,
            "isolation": isolate_terms(finest.residual, finest.terms) if verdict != "verified" else {},
        },
    }
    return report
