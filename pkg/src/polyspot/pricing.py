"""Spot, delivery-period forward and approximate option valuation.

Forwards average the propagated spot polynomial over the delivery window
[T, T']:

    F(t, T, T') = (1/(T'-T)) H(state)^T sum_k [int_T^T' e^{(u-t)G} s_k(u) du] p_k.

The integral is computed by Gauss-Legendre quadrature by default; for pure
cosine/sine modes a closed form through the complex resolvent (G + ic)^{-1}
is available as a cross-check path.  Option payoffs are approximated by
Chebyshev interpolation on the factor interval and propagated through the
factor's eigenfunction expansion.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as ncheb
from scipy.linalg import expm, solve
from scipy.special import roots_jacobi

from .generator import GeneratorMatrix, propagate
from .jacobi import JacobiBasis, eigenvalue, log_ortho_norm, to_shape
from .model import DoubleJacobiModel, ModelSpec, OneFactorModel, RegimeModel, build_generator, spot_coeff_vector

__all__ = [
    "SeasonalMode",
    "Seasonality",
    "CONSTANT_SEASONALITY",
    "ForwardQuote",
    "ResolventWarning",
    "spot",
    "forward",
    "forward_coefficient_integral",
    "option_polyapprox",
]


class ResolventWarning(UserWarning):
    """The closed-form resolvent path was numerically singular; quadrature used."""


@dataclass(frozen=True)
class SeasonalMode:
    """One seasonal weight s(t): constant, or weight*cos(freq*t + phase)/sin(...)."""

    kind: str = "const"  # "const" | "cos" | "sin"
    weight: float = 1.0
    freq: float = 0.0  # angular frequency, 1/year
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in ("const", "cos", "sin"):
            raise ValueError(f"unknown seasonal mode kind {self.kind!r}")
        if self.kind == "const" and self.freq != 0.0:
            raise ValueError("constant mode must have zero frequency")

    def value(self, t: float) -> float:
        if self.kind == "const":
            return self.weight
        if self.kind == "cos":
            return self.weight * math.cos(self.freq * t + self.phase)
        return self.weight * math.sin(self.freq * t + self.phase)


@dataclass(frozen=True)
class Seasonality:
    """A sum of seasonal modes multiplying the spot coefficient vector."""

    modes: tuple[SeasonalMode, ...] = (SeasonalMode(),)

    def __post_init__(self):
        if len(self.modes) == 0:
            raise ValueError("seasonality needs at least one mode")

    def value(self, t: float) -> float:
        return sum(m.value(t) for m in self.modes)


CONSTANT_SEASONALITY = Seasonality()


@dataclass(frozen=True)
class ForwardQuote:
    """Forward value for delivery over (T, T'), quoted at time t."""

    t: float
    T: float
    T_prime: float
    value: float

    def __post_init__(self):
        if not (self.T_prime > self.T >= self.t):
            raise ValueError("delivery window must satisfy T' > T >= t")


def _seasonality_of(model: ModelSpec, seasonality: Seasonality | None) -> Seasonality:
    if seasonality is not None:
        return seasonality
    return model.seasonality if model.seasonality is not None else CONSTANT_SEASONALITY


def spot(model: ModelSpec, state, t: float = 0.0) -> float:
    """Spot price at the given factor state: Phi(x), or the (1-y)/y map blend."""
    factor = _seasonality_of(model, None).value(t)
    if isinstance(model, OneFactorModel):
        x = float(np.asarray(state).reshape(()))
        if not 0.0 <= x <= 1.0:
            raise ValueError("factor state must lie in [0, 1]")
        return factor * float(model.price_map.eval(x))
    x, y = (float(v) for v in np.asarray(state, dtype=float).reshape(2))
    if not 0.0 <= x <= 1.0:
        raise ValueError("x state must lie in [0, 1]")
    if isinstance(model, RegimeModel):
        if y not in (0.0, 1.0):
            raise ValueError("regime state must be 0 or 1")
    elif not 0.0 <= y <= 1.0:
        raise ValueError("y state must lie in [0, 1]")
    return factor * float((1.0 - y) * model.map0.eval(x) + y * model.map1.eval(x))


def forward_coefficient_integral(
    gen: GeneratorMatrix,
    mode: SeasonalMode,
    t: float,
    T: float,
    T_prime: float,
    p: np.ndarray,
    n_nodes: int = 16,
    method: str = "quadrature",
) -> np.ndarray:
    """int_T^T' e^{(u-t)G} s(u) du applied to p, for a single seasonal mode.

    method "quadrature" uses n_nodes Gauss-Legendre points; "closed" uses the
    complex-resolvent identity (cos/sin modes only) and falls back to
    quadrature with a ResolventWarning if G + ic I is numerically singular.
    """
    if method == "closed":
        if mode.kind == "const":
            raise ValueError("closed form requires a cos or sin mode (G itself is singular)")
        c = mode.freq
        phase = mode.phase if mode.kind == "cos" else mode.phase - 0.5 * math.pi
        g = gen.matrix
        dim = g.shape[0]
        gc = g + 1j * c * np.eye(dim)
        try:
            diff = (expm((T_prime - t) * gc) - expm((T - t) * gc)) @ p
            sol = solve(gc, diff)
            resid = np.linalg.norm(gc @ sol - diff)
            if not np.all(np.isfinite(sol)) or resid > 1e-8 * max(1.0, np.linalg.norm(diff)):
                raise np.linalg.LinAlgError("resolvent solve inaccurate")
        except np.linalg.LinAlgError:
            warnings.warn(
                f"G + {c}i I is numerically singular; falling back to quadrature",
                ResolventWarning,
                stacklevel=2,
            )
            return forward_coefficient_integral(gen, mode, t, T, T_prime, p, n_nodes, "quadrature")
        return mode.weight * np.real(np.exp(1j * (c * t + phase)) * sol)
    if method != "quadrature":
        raise ValueError(f"unknown method {method!r}")
    nodes, weights = np.polynomial.legendre.leggauss(n_nodes)
    u = 0.5 * (T_prime - T) * nodes + 0.5 * (T_prime + T)
    w = 0.5 * (T_prime - T) * weights
    out = np.zeros_like(np.asarray(p, dtype=float))
    for ui, wi in zip(u, w):
        out += wi * mode.value(ui) * propagate(gen, ui - t, np.asarray(p, dtype=float))
    return out


def forward(
    model: ModelSpec,
    state,
    t: float,
    T: float,
    T_prime: float,
    seasonality: Seasonality | None = None,
    n_nodes: int = 16,
    method: str = "quadrature",
) -> ForwardQuote:
    """Delivery-period forward quote for the window [T, T']."""
    if not (t <= T < T_prime):
        raise ValueError("need t <= T < T'")
    seas = _seasonality_of(model, seasonality)
    gen = build_generator(model)
    p = spot_coeff_vector(model, gen.basis)
    h = gen.basis.evaluate(state)
    total = 0.0
    for mode in seas.modes:
        use = method
        if method == "closed" and mode.kind == "const":
            use = "quadrature"
        vec = forward_coefficient_integral(gen, mode, t, T, T_prime, p, n_nodes, use)
        total += float(h @ vec)
    return ForwardQuote(t=t, T=T, T_prime=T_prime, value=total / (T_prime - T))


def _gauss_beta_nodes(a: float, b: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights on [0,1] integrating f against the Beta(a, b) density exactly
    for polynomial f of degree <= 2n - 1."""
    z, w = roots_jacobi(n, b - 1.0, a - 1.0)  # weight (1-z)^(b-1) (1+z)^(a-1) on [-1,1]
    x = 0.5 * (z + 1.0)
    w = w / np.sum(w)  # normalize: the Beta density integrates to one
    return x, w


def option_polyapprox(
    model: OneFactorModel,
    strike: float,
    maturity: float,
    state,
    approx_degree: int = 40,
) -> tuple[float, float]:
    """European call value by polynomial payoff approximation; returns (value, residual).

    The payoff (Phi(x) - K)^+ is interpolated at approx_degree + 1 Chebyshev
    nodes on [0, 1]; the interpolant is expanded in the factor's eigenfunctions
    (equivalent to propagating its coefficient vector through exp(t G), but
    conditioned for high degrees) and its modes decay by exp(-mu_n maturity).
    The residual is the max absolute interpolation error on a fine grid; the
    payoff kink limits polynomial convergence, so it is always reported.
    """
    if not isinstance(model, OneFactorModel):
        raise TypeError("polynomial payoff approximation is implemented for one-factor models")
    if not 0.0 <= strike <= model.s_max:
        raise ValueError(f"strike must lie in [0, {model.s_max}]")
    if maturity < 0:
        raise ValueError("maturity must be nonnegative")
    pmap = model.price_map

    def payoff_z(z):
        return np.maximum(pmap.eval((np.asarray(z) + 1.0) / 2.0) - strike, 0.0)

    cheb = ncheb.chebinterpolate(payoff_z, approx_degree)
    grid = np.linspace(0.0, 1.0, 1001)
    residual = float(np.max(np.abs(ncheb.chebval(2.0 * grid - 1.0, cheb) - np.maximum(pmap.eval(grid) - strike, 0.0))))

    a, b = to_shape(model.factor)
    basis = JacobiBasis(u=a + b - 1.0, v=a, max_degree=approx_degree)
    nodes, weights = _gauss_beta_nodes(a, b, approx_degree + 1)
    interp_at_nodes = ncheb.chebval(2.0 * nodes - 1.0, cheb)
    psi = basis.values(nodes)
    k_n = np.exp(log_ortho_norm(a, b, np.arange(approx_degree + 1)))
    modes = k_n * (psi @ (weights * interp_at_nodes))
    decay = np.exp(-eigenvalue(model.factor, np.arange(approx_degree + 1)) * maturity)
    x0 = float(np.asarray(state).reshape(()))
    value = float(basis.values(np.array(x0)) @ (modes * decay))
    return value, residual
