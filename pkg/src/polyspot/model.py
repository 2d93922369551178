"""Model specifications: one-factor, regime-switching and double-Jacobi variants.

Each model bundles factor parameters, one or two increasing price maps sharing
a common price cap, an optional seasonality and the polynomial basis degree
used for pricing.  Simulation of daily observations lives here too.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Union

import numpy as np

from .generator import BasisDescriptor, GeneratorMatrix, build_1f, build_regime, build_2f_jacobi, coeff_vector_1f, coeff_vector_blend
from .jacobi import JacobiParams, euler_step, simulate_paths
from .polymap import IncreasingPolyMap

if TYPE_CHECKING:
    from .pricing import Seasonality

__all__ = [
    "OneFactorModel",
    "RegimeModel",
    "DoubleJacobiModel",
    "ModelSpec",
    "build_generator",
    "spot_coeff_vector",
    "simulate_model",
]


@dataclass(frozen=True, eq=False)
class OneFactorModel:
    """Jacobi factor mapped through a single increasing polynomial."""

    factor: JacobiParams
    price_map: IncreasingPolyMap
    seasonality: "Seasonality | None" = None
    basis_degree: int | None = None

    @property
    def s_max(self) -> float:
        return self.price_map.s_max

    @property
    def kind(self) -> str:
        return "one_factor"


@dataclass(frozen=True, eq=False)
class RegimeModel:
    """Jacobi price factor with a two-state chain selecting between two maps."""

    x_factor: JacobiParams
    lambda01: float
    lambda10: float
    map0: IncreasingPolyMap
    map1: IncreasingPolyMap
    seasonality: "Seasonality | None" = None
    basis_degree: int | None = None

    def __post_init__(self):
        if self.lambda01 < 0 or self.lambda10 < 0:
            raise ValueError("switching intensities must be nonnegative")
        if self.map0.s_max != self.map1.s_max:
            raise ValueError("both maps must share the same price cap")

    @property
    def s_max(self) -> float:
        return self.map0.s_max

    @property
    def kind(self) -> str:
        return "regime"


@dataclass(frozen=True, eq=False)
class DoubleJacobiModel:
    """Fast Jacobi price factor X blended between two maps by a slow Jacobi Y."""

    x_factor: JacobiParams
    y_factor: JacobiParams
    map0: IncreasingPolyMap
    map1: IncreasingPolyMap
    seasonality: "Seasonality | None" = None
    basis_degree: int | None = None

    def __post_init__(self):
        if self.map0.s_max != self.map1.s_max:
            raise ValueError("both maps must share the same price cap")

    @property
    def s_max(self) -> float:
        return self.map0.s_max

    @property
    def kind(self) -> str:
        return "double_jacobi"


ModelSpec = Union[OneFactorModel, RegimeModel, DoubleJacobiModel]


def _default_basis_degree(model: ModelSpec) -> int:
    if isinstance(model, OneFactorModel):
        return model.price_map.degree
    return max(model.map0.degree, model.map1.degree) + 1


def build_generator(model: ModelSpec, degree: int | None = None) -> GeneratorMatrix:
    """Generator matrix for the model's factor process at the pricing basis degree."""
    if degree is None:
        degree = model.basis_degree if model.basis_degree is not None else _default_basis_degree(model)
    if isinstance(model, OneFactorModel):
        return build_1f("Jacobi", model.factor, degree)
    if isinstance(model, RegimeModel):
        f = model.x_factor
        return build_regime(
            b1=f.kappa * f.theta,
            B11=-f.kappa,
            B12=0.0,
            sigma=f.sigma,
            lambda01=model.lambda01,
            lambda10=model.lambda10,
            degree=degree,
        )
    fx, fy = model.x_factor, model.y_factor
    return build_2f_jacobi(
        b1=fx.kappa * fx.theta,
        b2=fy.kappa * fy.theta,
        B11=-fx.kappa,
        B12=0.0,
        B21=0.0,
        B22=-fy.kappa,
        sigma=fx.sigma,
        rho=fy.sigma,
        degree=degree,
    )


def spot_coeff_vector(model: ModelSpec, basis: BasisDescriptor) -> np.ndarray:
    """Coefficient vector of the spot polynomial on the given basis."""
    if isinstance(model, OneFactorModel):
        return coeff_vector_1f(basis, model.price_map.Phi_coeffs)
    return coeff_vector_blend(basis, model.map0.Phi_coeffs, model.map1.Phi_coeffs)


def _chain_step(y: np.ndarray, lambda01: float, lambda10: float, h: float, rng: np.random.Generator) -> np.ndarray:
    lam = lambda01 + lambda10
    if lam == 0.0 or h == 0.0:
        return y
    decay = -math.expm1(-lam * h)  # 1 - exp(-lam h)
    p01 = lambda01 / lam * decay
    p10 = lambda10 / lam * decay
    u = rng.random(y.shape)
    flip = np.where(y > 0.5, u < p10, u < p01)
    return np.where(flip, 1.0 - y, y)


def simulate_model(
    model: ModelSpec,
    n_obs: int,
    dt_obs: float = 1.0 / 365.0,
    substeps: int = 16,
    rng: np.random.Generator | int | None = None,
    x0: float | None = None,
    y0: float | None = None,
):
    """Simulate n_obs + 1 daily observations of factors and prices.

    Initial states default to draws from the stationary laws.  Returns a dict
    with keys "x", "price" and, for two-factor models, "y"; all are arrays of
    length n_obs + 1.  Deterministic under a fixed seed.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    def seasonal(prices: np.ndarray) -> np.ndarray:
        if model.seasonality is None:
            return prices
        t = np.arange(n_obs + 1) * dt_obs
        return prices * np.array([model.seasonality.value(ti) for ti in t])

    if isinstance(model, OneFactorModel):
        f = model.factor
        start = rng.beta(f.a, f.b) if x0 is None else x0
        x = simulate_paths(f, [start], dt_obs, n_obs, substeps, rng)[:, 0]
        return {"x": x, "price": seasonal(model.price_map.eval(x))}
    fx = model.x_factor
    x_start = rng.beta(fx.a, fx.b) if x0 is None else x0
    if isinstance(model, RegimeModel):
        lam = model.lambda01 + model.lambda10
        if y0 is None:
            p_up = model.lambda01 / lam if lam > 0 else 0.0
            y_cur = float(rng.random() < p_up)
        else:
            y_cur = float(y0)
        x = np.empty(n_obs + 1)
        y = np.empty(n_obs + 1)
        x[0], y[0] = np.clip(x_start, 1e-12, 1 - 1e-12), y_cur
        h = dt_obs / substeps
        for m in range(n_obs):
            xs = np.array([x[m]])
            ys = np.array([y[m]])
            for _ in range(substeps):
                xs = euler_step(fx, xs, h, 1, rng)
                ys = _chain_step(ys, model.lambda01, model.lambda10, h, rng)
            x[m + 1], y[m + 1] = xs[0], ys[0]
        price = (1.0 - y) * model.map0.eval(x) + y * model.map1.eval(x)
        return {"x": x, "y": y, "price": seasonal(price)}
    fy = model.y_factor
    y_start = rng.beta(fy.a, fy.b) if y0 is None else y0
    x = np.empty(n_obs + 1)
    y = np.empty(n_obs + 1)
    x[0] = np.clip(x_start, 1e-12, 1 - 1e-12)
    y[0] = np.clip(y_start, 1e-12, 1 - 1e-12)
    for m in range(n_obs):
        # advance both factors through the same substep schedule
        xs, ys = np.array([x[m]]), np.array([y[m]])
        for _ in range(substeps):
            xs = euler_step(fx, xs, dt_obs / substeps, 1, rng)
            ys = euler_step(fy, ys, dt_obs / substeps, 1, rng)
        x[m + 1], y[m + 1] = xs[0], ys[0]
    price = (1.0 - y) * model.map0.eval(x) + y * model.map1.eval(x)
    return {"x": x, "y": y, "price": seasonal(price)}
