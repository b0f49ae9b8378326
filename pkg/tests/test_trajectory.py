import numpy as np
import pytest

from ricci_lab.flow import FlowConfig
from ricci_lab.grid import make_grid
from ricci_lab.initial_data import conformal_bump, flat_const
from ricci_lab.trajectory import (
    classify,
    derivative_series,
    fd_weights,
    identity_check,
    isolate_terms,
    observed_order,
    time_derivative,
    verdict_from_orders,
)


def test_fd_weights_central():
    np.testing.assert_allclose(fd_weights([-2, -1, 0, 1, 2]), [1 / 12, -8 / 12, 0, 8 / 12, -1 / 12], atol=1e-14)


def test_time_derivative_exact_on_quartic():
    dt = 0.1
    ts = np.arange(5) * dt
    samples = [1 + t - 2 * t**2 + 0.5 * t**3 + 3 * t**4 for t in ts]
    for i in range(5):
        t = ts[i]
        assert abs(time_derivative(samples, dt, i) - (1 - 4 * t + 1.5 * t**2 + 12 * t**3)) < 1e-11


def test_derivative_series_shape():
    out = derivative_series([float(k) ** 2 for k in range(7)], 1.0)
    np.testing.assert_allclose(out, [2.0 * k for k in range(7)], atol=1e-12)
    with pytest.raises(ValueError):
        derivative_series([1.0, 2.0], 1.0)


def test_observed_order():
    assert abs(observed_order([1.0, 1 / 16]) - 4.0) < 1e-12
    assert observed_order([1.0]) is None
    assert observed_order([0.0, 0.0]) is None


def test_isolation_finds_scaled_term():
    rng = np.random.default_rng(0)
    terms = {k: rng.normal(size=(8, 8)) for k in "abc"}
    res = isolate_terms(-2.0 * terms["b"], terms)
    assert res["responsible"] == ["b"]
    assert abs(res["per_term"]["b"]["alpha"] + 2.0) < 1e-12
    assert res["unexplained_fraction"] < 1e-12


def test_isolation_flags_missing_term():
    rng = np.random.default_rng(1)
    terms = {k: rng.normal(size=(16, 16)) for k in "ab"}
    res = isolate_terms(rng.normal(size=(16, 16)), terms)
    assert res["unexplained_fraction"] > 0.9


def test_verdicts():
    assert verdict_from_orders(1e-12, None, None) == "verified"
    assert verdict_from_orders(1e-3, 4.0, None) == "verified"
    assert verdict_from_orders(1e-3, 2.0, 0.0) == "discretization-limited"
    assert verdict_from_orders(1e-3, 0.1, 0.05) == "formula-discrepancy"
    # converging in dt keeps it out of formula-discrepancy
    assert verdict_from_orders(1e-3, 0.1, 3.0) == "discretization-limited"
    assert classify([1e-2, 1e-2, 1e-2], [1e-2, 1e-2]) == "formula-discrepancy"


def test_scalar_evolution_identity_verifies():
    rep = identity_check("thm1-scalar", conformal_bump(2), make_grid(2, 16), FlowConfig(a=0.5, B=0.3), levels=3)
    assert rep["verdict"] == "verified"
    assert rep["h_order"] >= 3.5
    assert "residual" in rep["terms"] and "laplacian_R" in rep["terms"]


def test_control_identity_verifies_and_ricci_line_does_not():
    cfg = FlowConfig(a=0.5, B=0.3)
    ok = identity_check("ds-dt-control", conformal_bump(2), make_grid(2, 16), cfg, levels=3)
    assert ok["verdict"] == "verified"
    bad = identity_check("thm1-ricci", conformal_bump(2), make_grid(2, 16), cfg, levels=3)
    assert bad["verdict"] == "formula-discrepancy"
    assert bad["details"]["isolation"]["responsible"]


def test_flat_identities_exact():
    for name in ("thm1-ricci", "thm1-scalar", "ds-dt", "df-dt"):
        rep = identity_check(name, flat_const(2), make_grid(2, 8), FlowConfig(), levels=2)
        assert rep["verdict"] == "verified"
        assert rep["terms"]["residual"]["linf"] <= 1e-11
