"""Analytic initial-data recipes.

Every field is a callable of the coordinate array ``X`` (shape ``(d, *shape)``)
so it can be sampled on any grid or on a relabelled chart.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grid import Grid

PRESETS = ("flat-const", "conformal-bump", "random-smooth")


@dataclass(frozen=True)
class FourierScalar:
    """``offset + sum_k a_k cos(k.x) + b_k sin(k.x)`` with integer wavevectors."""

    k: np.ndarray
    a: np.ndarray
    b: np.ndarray
    offset: float = 0.0

    def __call__(self, X: np.ndarray) -> np.ndarray:
        phase = np.tensordot(self.k, X, axes=(1, 0))  # (m, *shape)
        vals = np.tensordot(self.a, np.cos(phase), axes=1) + np.tensordot(self.b, np.sin(phase), axes=1)
        return self.offset + vals

    def gradient(self, X: np.ndarray) -> np.ndarray:
        """Exact partials, shape ``(*shape, d)``."""
        phase = np.tensordot(self.k, X, axes=(1, 0))
        w = -self.a[:, None] * self.k
        c = self.b[:, None] * self.k
        grad = np.tensordot(w.T, np.sin(phase), axes=1) + np.tensordot(c.T, np.cos(phase), axes=1)
        return np.moveaxis(grad, 0, -1)


def random_fourier(rng: np.random.Generator, dim: int, cutoff: int, amplitude: float, offset=0.0) -> FourierScalar:
    """Random trigonometric polynomial with ``|f - offset| <= amplitude`` everywhere.

    Modes with ``1 <= max|k_i| <= cutoff``; coefficients decay like ``1/(1+|k|^2)``.
    """
    ks = [k for k in itertools.product(range(-cutoff, cutoff + 1), repeat=dim) if any(k)]
    # keep one of each +-k pair
    ks = [k for k in ks if k > tuple(-c for c in k)]
    ks = np.array(ks, dtype=float)
    decay = 1.0 / (1.0 + np.sum(ks**2, axis=1))
    a = rng.normal(size=len(ks)) * decay
    b = rng.normal(size=len(ks)) * decay
    total = np.sum(np.abs(a) + np.abs(b))
    return FourierScalar(ks, amplitude * a / total, amplitude * b / total, offset)


def sample_sym2(components: dict[tuple[int, int], Callable], dim: int, X: np.ndarray) -> np.ndarray:
    out = np.zeros(X.shape[1:] + (dim, dim))
    for (i, j), f in components.items():
        out[..., i, j] = f(X)
        out[..., j, i] = out[..., i, j]
    return out


@dataclass(frozen=True)
class InitialData:
    """Callables producing ``g``, ``Phi`` and ``u`` from coordinates."""

    name: str
    dim: int
    metric_fn: Callable[[np.ndarray], np.ndarray]
    phi_fn: Callable[[np.ndarray], np.ndarray]
    u_fn: Callable[[np.ndarray], np.ndarray]
    params: dict = field(default_factory=dict)

    def fields(self, grid: Grid, X: np.ndarray | None = None):
        X = grid.coords if X is None else X
        return self.metric_fn(X), self.phi_fn(X), self.u_fn(X)


def _const(value: float):
    return lambda X: np.full(X.shape[1:], float(value))


def flat_const(dim: int, phi_const: float = 0.0, u_const: float = 1.0) -> InitialData:
    eye = np.eye(dim)
    return InitialData(
        "flat-const",
        dim,
        lambda X: np.broadcast_to(eye, X.shape[1:] + (dim, dim)).copy(),
        _const(phi_const),
        _const(u_const),
        {"phi_const": phi_const, "u_const": u_const},
    )


def conformal_bump(
    dim: int,
    amplitude: float = 0.2,
    frequency: int = 1,
    phi_amplitude: float = 0.1,
    u_amplitude: float = 0.1,
) -> InitialData:
    """``g = e^{2 f} delta`` with ``f = A prod_i sin(m x_i)``, ``Phi = c sin y``, ``u = exp(b cos x)``."""
    eye = np.eye(dim)

    def conf(X):
        return amplitude * np.prod(np.sin(frequency * X), axis=0)

    return InitialData(
        "conformal-bump",
        dim,
        lambda X: np.exp(2.0 * conf(X))[..., None, None] * eye,
        lambda X: phi_amplitude * np.sin(X[1]),
        lambda X: np.exp(u_amplitude * np.cos(X[0])),
        {
            "amplitude": amplitude,
            "frequency": frequency,
            "phi_amplitude": phi_amplitude,
            "u_amplitude": u_amplitude,
            "conformal_factor": conf,
        },
    )


def random_smooth(
    dim: int,
    seed: int,
    cutoff: int = 2,
    amplitude: float = 0.1,
    phi_amplitude: float = 0.1,
    u_amplitude: float = 0.2,
) -> InitialData:
    """``g = delta + P`` with random trigonometric entries; SPD since ``d * amplitude < 1``."""
    if dim * amplitude >= 1.0:
        raise ValueError("amplitude too large to guarantee a positive definite metric")
    rng = np.random.default_rng(seed)
    comps = {
        (i, j): random_fourier(rng, dim, cutoff, amplitude, 1.0 if i == j else 0.0)
        for i in range(dim)
        for j in range(i, dim)
    }
    phi = random_fourier(rng, dim, cutoff, phi_amplitude)
    logu = random_fourier(rng, dim, cutoff, u_amplitude)
    return InitialData(
        "random-smooth",
        dim,
        lambda X: sample_sym2(comps, dim, X),
        phi,
        lambda X: np.exp(logu(X)),
        {"seed": seed, "cutoff": cutoff, "amplitude": amplitude},
    )


def random_direction(dim: int, seed: int, cutoff: int = 2, amplitude: float = 1.0):
    """Random smooth symmetric 2-tensor field (a variation direction), as a callable."""
    rng = np.random.default_rng(seed)
    comps = {
        (i, j): random_fourier(rng, dim, cutoff, amplitude)
        for i in range(dim)
        for j in range(i, dim)
    }
    return lambda X: sample_sym2(comps, dim, X)


def make_preset(name: str, dim: int, **params) -> InitialData:
    if name == "flat-const":
        return flat_const(dim, **params)
    if name == "conformal-bump":
        return conformal_bump(dim, **params)
    if name == "random-smooth":
        return random_smooth(dim, **params)
    raise ValueError(f"unknown preset {name!r}; expected one of {PRESETS}")
