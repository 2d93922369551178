"""Jacobi diffusion on [0,1]: parameterizations, spectral densities, simulation.

The process dX = kappa*(theta - X) dt + sigma*sqrt(X*(1-X)) dW is stationary
with a Beta(a, b) law, where a = 2*kappa*theta/sigma^2 and
b = 2*kappa*(1-theta)/sigma^2.  Its transition density has an eigenfunction
expansion in shifted Jacobi polynomials, which is the workhorse behind every
likelihood in this package.

All values here are immutable after construction and safe to share across
threads; simulation routines carry their own RNG state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

__all__ = [
    "ConvergenceError",
    "JacobiParams",
    "JacobiBasis",
    "TransitionDensityConfig",
    "JacobiTransitionKernel",
    "to_shape",
    "boundary_class",
    "jacobi_poly",
    "stationary_density",
    "log_stationary_density",
    "transition_density",
    "eigenvalue",
    "log_ortho_norm",
    "simulate_path",
    "simulate_paths",
    "euler_step",
]

# State clamp used by the Euler scheme; keeps sqrt(x*(1-x)) well defined.
_CLAMP = 1e-12


class ConvergenceError(RuntimeError):
    """Eigenfunction series did not meet its tail tolerance within the term cap."""


@dataclass(frozen=True)
class JacobiParams:
    """Mean-reversion rate (1/year), long-run level in [0,1], volatility (1/sqrt(year))."""

    kappa: float
    theta: float
    sigma: float

    def __post_init__(self):
        if not (self.kappa > 0 and math.isfinite(self.kappa)):
            raise ValueError(f"kappa must be positive and finite, got {self.kappa}")
        if not (0.0 <= self.theta <= 1.0):
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be positive and finite, got {self.sigma}")
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise ValueError("shape parameters (a, b) must be finite")

    @property
    def a(self) -> float:
        return 2.0 * self.kappa * self.theta / self.sigma**2

    @property
    def b(self) -> float:
        return 2.0 * self.kappa * (1.0 - self.theta) / self.sigma**2

    @classmethod
    def from_shape(cls, a: float, b: float, sigma: float) -> "JacobiParams":
        """Build from shape parameters via kappa = sigma^2*(a+b)/2, theta = a/(a+b)."""
        if a < 0 or b < 0 or a + b <= 0:
            raise ValueError(f"shape parameters must be nonnegative with a+b > 0, got ({a}, {b})")
        return cls(kappa=sigma**2 * (a + b) / 2.0, theta=a / (a + b), sigma=sigma)


def to_shape(params: JacobiParams) -> tuple[float, float]:
    """Shape pair (a, b) = (2*kappa*theta/sigma^2, 2*kappa*(1-theta)/sigma^2)."""
    return params.a, params.b


def boundary_class(params: JacobiParams) -> tuple[bool, bool]:
    """(zero_unattainable, one_unattainable): the boundary at 0 is unattainable
    iff a >= 1, the one at 1 iff b >= 1 (equality included)."""
    return params.a >= 1.0, params.b >= 1.0


class JacobiBasis:
    """Shifted Jacobi polynomials J_n(x; u, v) on the declared domain [0, 1].

    J_0 = 1, J_1(x) = 1 - ((u+1)/v) x, and

        x J_n = alpha_n J_{n-1} + beta_n J_n + gamma_n J_{n+1},

    with

        alpha_n = n (v - u - n) / ((u + 2n)(u + 2n - 1)),
        beta_n  = (2n (u + n) + v (u - 1)) / ((u + 2n - 1)(u + 2n + 1)),
        gamma_n = -(v + n)(u + n) / ((u + 2n + 1)(u + 2n)).

    The n = 0 coefficients reduce to beta_0 = v/(u+1), gamma_0 = -v/(u+1)
    (the common factor u - 1 cancels), alpha_0 unused.

    The diffusion eigenfunctions use u = a + b - 1, v = a; those satisfy

        E[J_n(X_t) | X_0 = x] = exp(-mu_n t) J_n(x),   mu_n = kappa n + (sigma^2/2) n (n-1).
    """

    domain = (0.0, 1.0)

    def __init__(self, u: float, v: float, max_degree: int):
        if max_degree < 0:
            raise ValueError("max_degree must be nonnegative")
        if v <= 0 or u <= -1:
            raise ValueError(f"require v > 0 and u > -1, got u={u}, v={v}")
        self.u = float(u)
        self.v = float(v)
        self.max_degree = int(max_degree)
        n = np.arange(max_degree + 1, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            self.alpha = n * (v - u - n) / ((u + 2 * n) * (u + 2 * n - 1))
            self.beta = (2 * n * (u + n) + v * (u - 1)) / ((u + 2 * n - 1) * (u + 2 * n + 1))
            self.gamma = -(v + n) * (u + n) / ((u + 2 * n + 1) * (u + 2 * n))
        self.alpha[0] = 0.0
        self.beta[0] = v / (u + 1.0)
        self.gamma[0] = -v / (u + 1.0)

    @classmethod
    def for_process(cls, params: JacobiParams, max_degree: int) -> "JacobiBasis":
        a, b = to_shape(params)
        return cls(u=a + b - 1.0, v=a, max_degree=max_degree)

    def values(self, x, n_max: int | None = None) -> np.ndarray:
        """Evaluate J_0..J_n_max at x; returns shape (n_max+1,) + x.shape."""
        if n_max is None:
            n_max = self.max_degree
        if n_max > self.max_degree:
            raise ValueError(f"degree {n_max} exceeds stored coefficients ({self.max_degree})")
        x = np.asarray(x, dtype=float)
        out = np.empty((n_max + 1,) + x.shape, dtype=float)
        out[0] = 1.0
        if n_max >= 1:
            out[1] = 1.0 - ((self.u + 1.0) / self.v) * x
        for n in range(1, n_max):
            out[n + 1] = ((x - self.beta[n]) * out[n] - self.alpha[n] * out[n - 1]) / self.gamma[n]
        return out

    def poly_coeffs(self, n: int) -> np.ndarray:
        """Power-basis coefficients (low to high) of J_n, by the same recursion."""
        if n > self.max_degree:
            raise ValueError(f"degree {n} exceeds stored coefficients ({self.max_degree})")
        prev = np.array([1.0])
        if n == 0:
            return prev
        cur = np.array([1.0, -(self.u + 1.0) / self.v])
        for k in range(1, n):
            shifted = np.concatenate([[0.0], cur])  # x * J_k
            nxt = shifted.copy()
            nxt[: k + 1] -= self.beta[k] * cur
            nxt[: k] -= self.alpha[k] * prev
            nxt /= self.gamma[k]
            prev, cur = cur, nxt
        return cur


def jacobi_poly(basis: JacobiBasis, n: int, x) -> np.ndarray:
    """Value of J_n at x via the three-term recursion."""
    return basis.values(x, n_max=n)[n]


def log_stationary_density(params: JacobiParams, x) -> np.ndarray:
    a, b = to_shape(params)
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0.0) or np.any(x >= 1.0):
        raise ValueError("stationary density is defined on the open interval (0, 1)")
    norm = gammaln(a + b) - gammaln(a) - gammaln(b)
    return norm + (a - 1.0) * np.log(x) + (b - 1.0) * np.log1p(-x)


def stationary_density(params: JacobiParams, x) -> np.ndarray:
    """Beta(a, b) density w(x) = Gamma(a+b)/(Gamma(a)Gamma(b)) x^(a-1) (1-x)^(b-1)."""
    return np.exp(log_stationary_density(params, x))


def eigenvalue(params: JacobiParams, n) -> np.ndarray:
    """mu_n = kappa*n + (sigma^2/2)*n*(n-1); the generator acts on J_n as -mu_n."""
    n = np.asarray(n, dtype=float)
    return params.kappa * n + 0.5 * params.sigma**2 * n * (n - 1.0)


def log_ortho_norm(a: float, b: float, n) -> np.ndarray:
    """log k_n where the eigenfunctions satisfy int w J_n J_m dx = delta_nm / k_n.

    k_n = (a+b-1+2n) (a)_n (a+b)_n / (n! (a+b-1+n) (b)_n), with k_0 = 1.
    Computed in log space: Gamma overflows near argument 170 in double precision.
    """
    n = np.asarray(n, dtype=float)
    u = a + b - 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (
            np.log(u + 2.0 * n)
            + gammaln(a + n)
            - gammaln(a)
            + gammaln(a + b + n)
            - gammaln(a + b)
            - gammaln(n + 1.0)
            - np.log(u + n)
            - gammaln(b + n)
            + gammaln(b)
        )
    return np.where(n == 0, 0.0, out)


@dataclass(frozen=True)
class TransitionDensityConfig:
    """Truncation cap and tail tolerance for the transition-density series."""

    max_terms: int = 64
    tol: float = 1e-12

    def __post_init__(self):
        if self.max_terms < 1:
            raise ValueError("max_terms must be at least 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


DEFAULT_DENSITY_CONFIG = TransitionDensityConfig()

# Grid used to estimate sup|J_n| for the truncation rule.
_SUP_GRID = np.linspace(0.0, 1.0, 2001)


class JacobiTransitionKernel:
    """Truncated eigenfunction expansion of the transition density for one time step.

    p(x, dt; y) = sum_n k_n w(x) J_n(x) J_n(y) exp(-mu_n dt), truncated at the
    first N whose tail bound k_N exp(-mu_N dt) sup|J_N|^2 drops below the
    configured tolerance, capped at max_terms.  The truncation order depends
    only on (params, dt), so p(x, dt; y) w(y) is symmetric in (x, y) exactly.

    With strict=True a cap hit raises ConvergenceError (dt too small for the
    cap); with strict=False the capped series is used as-is, which acts as a
    spectral projection of the kernel (the behaviour slow-factor filtering
    needs).
    """

    def __init__(
        self,
        params: JacobiParams,
        dt: float,
        config: TransitionDensityConfig = DEFAULT_DENSITY_CONFIG,
        strict: bool = True,
    ):
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.params = params
        self.dt = float(dt)
        self.config = config
        a, b = to_shape(params)
        basis = JacobiBasis(u=a + b - 1.0, v=a, max_degree=config.max_terms)
        n = np.arange(config.max_terms + 1)
        log_k = log_ortho_norm(a, b, n)
        mu = eigenvalue(params, n)
        sup = np.max(np.abs(basis.values(_SUP_GRID)), axis=1)
        with np.errstate(divide="ignore"):
            log_bound = log_k - mu * self.dt + 2.0 * np.log(sup)
        below = np.nonzero(log_bound <= math.log(config.tol))[0]
        if below.size:
            n_terms = int(below[0])
            converged = True
            if n_terms == 0:
                n_terms = 1  # always keep the stationary term
        else:
            n_terms = config.max_terms
            converged = False
            if strict:
                raise ConvergenceError(
                    f"transition density series not converged after {config.max_terms} terms "
                    f"(dt={dt:g} too small for the configured cap)"
                )
        self.n_terms = n_terms
        self.converged = converged
        self._basis = basis
        self._log_coef = (log_k - mu * self.dt)[:n_terms]

    def density(self, x, y) -> np.ndarray:
        """p(x, dt; y): density in x of X_{t+dt} given X_t = y; broadcasts over x, y.

        Truncation noise can leave far-tail values slightly negative; callers
        taking logs should floor the result.
        """
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        jx = self._basis.values(x, self.n_terms - 1)
        jy = self._basis.values(y, self.n_terms - 1)
        # Fold w(x) into each term before summing so that near-boundary
        # evaluations underflow to 0 instead of overflowing.
        log_w = log_stationary_density(self.params, x)
        weighted = np.exp(self._log_coef.reshape((-1,) + (1,) * x.ndim) + log_w) * jx
        return np.einsum("n...,n...->...", weighted, jy)

    def log_weights(self) -> np.ndarray:
        """log(k_n) - mu_n*dt for the retained terms (spectral damping factors)."""
        return self._log_coef.copy()

    def basis_values(self, x, n_max: int | None = None) -> np.ndarray:
        return self._basis.values(x, self.n_terms - 1 if n_max is None else n_max)


def transition_density(
    params: JacobiParams,
    x,
    y,
    dt: float,
    config: TransitionDensityConfig = DEFAULT_DENSITY_CONFIG,
    strict: bool = True,
) -> np.ndarray:
    """Transition density p(x, dt; y) of the Jacobi diffusion (terminal x, initial y)."""
    return JacobiTransitionKernel(params, dt, config, strict=strict).density(x, y)


def euler_step(params: JacobiParams, x: np.ndarray, dt: float, substeps: int, rng: np.random.Generator) -> np.ndarray:
    """Advance an ensemble of states by one observation step of clamped Euler.

    Uses substeps internal steps of size dt/substeps; after each step the state
    is clamped to [1e-12, 1 - 1e-12] and the diffusion coefficient uses
    max(0, x*(1-x)) under the square root.
    """
    if substeps < 1:
        raise ValueError("substeps must be at least 1")
    h = dt / substeps
    sqrt_h = math.sqrt(h)
    kappa, theta, sigma = params.kappa, params.theta, params.sigma
    x = np.asarray(x, dtype=float).copy()
    for _ in range(substeps):
        z = rng.standard_normal(x.shape)
        x += kappa * (theta - x) * h + sigma * np.sqrt(np.maximum(x * (1.0 - x), 0.0)) * sqrt_h * z
        np.clip(x, _CLAMP, 1.0 - _CLAMP, out=x)
    return x


def simulate_paths(
    params: JacobiParams,
    x0,
    dt_obs: float,
    n_obs: int,
    substeps: int = 16,
    rng: np.random.Generator | int | None = None,
) -> np.ndarray:
    """Simulate an ensemble of paths; returns shape (n_obs + 1, n_paths).

    Deterministic under a fixed seed.  x0 may be a scalar or an array of
    initial states in [0, 1].
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if np.any((x0 < 0.0) | (x0 > 1.0)):
        raise ValueError("initial state must lie in [0, 1]")
    out = np.empty((n_obs + 1, x0.size), dtype=float)
    out[0] = np.clip(x0, _CLAMP, 1.0 - _CLAMP)
    for m in range(n_obs):
        out[m + 1] = euler_step(params, out[m], dt_obs, substeps, rng)
    return out


def simulate_path(
    params: JacobiParams,
    x0: float,
    dt_obs: float,
    n_obs: int,
    substeps: int = 16,
    rng: np.random.Generator | int | None = None,
) -> np.ndarray:
    """Single path of n_obs + 1 points in [0, 1] (clamped Euler with substeps)."""
    return simulate_paths(params, [x0], dt_obs, n_obs, substeps, rng)[:, 0]
