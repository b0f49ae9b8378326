import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ricci_lab.grid import make_grid
from ricci_lab.initial_data import conformal_bump, random_direction, random_fourier, random_smooth
from ricci_lab.metric import Metric, flat_metric
from ricci_lab.variation import (
    ANALYTIC,
    QUANTITIES,
    EpsilonTooLarge,
    VariationPair,
    d_christoffel,
    d_laplacian_parts,
    d_scalar,
    d_volume,
    fd_variation_oracle,
    loglog_slope,
)


def make_pair(n=32, seed=5, preset="random"):
    grid = make_grid(2, n)
    data = random_smooth(2, seed=seed) if preset == "random" else conformal_bump(2)
    g, phi, _ = data.fields(grid)
    X = grid.coords
    v = random_direction(2, seed + 100)(X)
    dphi = random_fourier(np.random.default_rng(seed + 200), 2, 2, 1.0)(X)
    return VariationPair(Metric(grid, g), v, phi, dphi)


@pytest.mark.parametrize("tag", ["christoffel", "volume", "hessian", "laplacian"])
def test_exact_formulas_match_oracle(tag):
    rep = fd_variation_oracle(tag, make_pair(48))
    assert rep.rel_residual <= 1e-6
    assert 1.8 <= rep.eps_slope <= 2.2


@pytest.mark.parametrize("tag", ["riemann", "ricci", "scalar"])
def test_curvature_variations_converge_fourth_order(tag):
    res = [fd_variation_oracle(tag, make_pair(n)).rel_residual for n in (24, 48)]
    assert res[0] / res[1] > 12.0


@pytest.mark.parametrize("tag", ["riemann", "ricci", "scalar"])
def test_curvature_variations_exact_on_flat(tag):
    grid = make_grid(2, 24)
    v = random_direction(2, 9)(grid.coords)
    rep = fd_variation_oracle(tag, VariationPair(flat_metric(grid), v))
    assert rep.rel_residual < 1e-9


def test_volume_closed_form():
    pair = make_pair(16)
    assert np.allclose(d_volume(pair), 0.5 * np.einsum("...ij,...ij->...", pair.metric.inv, pair.v))


def test_scalar_variation_conformal_direction_2d():
    """v = 2 psi g on flat 2D: dR = -2 lap0 psi (linearised conformal change)."""
    grid = make_grid(2, 48)
    x, y = grid.coords
    psi = np.sin(x) * np.cos(y)
    pair = VariationPair(flat_metric(grid), 2 * psi[..., None, None] * np.eye(2))
    # lap0 psi = -2 psi
    assert np.max(np.abs(d_scalar(pair) - 4 * psi)) < 1e-4


def test_laplacian_parts_split():
    pair = make_pair(24)
    parts = d_laplacian_parts(pair)
    assert set(parts) == {"metric", "scalar"}
    fixed_phi = VariationPair(pair.metric, pair.v, pair.phi, np.zeros_like(pair.phi))
    assert np.max(np.abs(d_laplacian_parts(fixed_phi)["scalar"])) == 0.0


def test_zero_direction_gives_zero():
    pair = make_pair(16)
    zero = VariationPair(pair.metric, np.zeros_like(pair.v), pair.phi, np.zeros_like(pair.phi))
    for tag in QUANTITIES:
        assert np.max(np.abs(ANALYTIC[tag](zero))) == 0.0


@given(st.floats(min_value=-3, max_value=3), st.floats(min_value=-3, max_value=3))
def test_christoffel_variation_linear_in_v(a, b):
    p = make_pair(16)
    w = random_direction(2, 77)(p.grid.coords)
    lhs = d_christoffel(VariationPair(p.metric, a * p.v + b * w))
    rhs = a * d_christoffel(p) + b * d_christoffel(VariationPair(p.metric, w))
    assert np.max(np.abs(lhs - rhs)) <= 1e-11 * (1 + abs(a) + abs(b)) * np.max(np.abs(d_christoffel(p)))


def test_asymmetric_direction_rejected():
    p = make_pair(16)
    v = p.v.copy()
    v[..., 0, 1] += 0.1
    with pytest.raises(ValueError, match="symmetric"):
        VariationPair(p.metric, v)


def test_eps_too_large():
    with pytest.raises(EpsilonTooLarge):
        fd_variation_oracle("christoffel", make_pair(16), scale=1e4)


def test_unknown_tag():
    with pytest.raises(ValueError):
        fd_variation_oracle("torsion", make_pair(16))


def test_loglog_slope():
    x = np.array([1e-3, 1e-4, 1e-5])
    assert abs(loglog_slope(x, 3 * x**2) - 2.0) < 1e-12
    assert np.isnan(loglog_slope(x, np.zeros(3)))
