"""One-factor maximum-likelihood calibration and BIC model selection.

The log-likelihood of daily prices s_0..s_M under a one-factor model is

    LL = sum_m [ log p(x_m, dt; x_{m-1}) - log Phi'(x_m) ],   x_m = Phi^{-1}(s_m),

with the m = 0 transition term replaced by the stationary density w(x_0).
Model selection runs a ladder over the map degree, warm-starting each degree
from the previous optimum, and ranks the rows by BIC = k ln(M_obs) - 2 LL
(lower is more favourable).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import differential_evolution, minimize

from .jacobi import JacobiParams, JacobiTransitionKernel, TransitionDensityConfig, log_stationary_density
from .polymap import IncreasingPolyMap, map_from_c

__all__ = [
    "PriceSeries",
    "CalibrationRow",
    "OptimizerConfig",
    "LikelihoodResult",
    "one_factor_loglik",
    "log_likelihood",
    "bic",
    "fit_ladder",
    "moment_start",
    "theta_bounds_1f",
    "embed_warm_start",
]

# Observations exactly at 0 or s_max are clipped (never dropped) to this
# relative offset, with a per-series clip count reported.
CLIP_FRACTION = 1e-6

# Series terms below this value are floored before the log; truncation noise
# in the eigenfunction series can leave far-tail densities at or below zero.
DENSITY_FLOOR = 1e-300

# The likelihood kernel uses a higher term cap than the pointwise default:
# large shape parameters (a + b ~ 70 appears in real calibrations) push the
# conservative sup-based truncation rule well past 64 terms at dt = 1/365.
LIKELIHOOD_DENSITY_CONFIG = TransitionDensityConfig(max_terms=320, tol=1e-12)

_KAPPA_BOUNDS = (1e-2, 1e3)
_THETA_BOUNDS = (0.01, 0.99)
_SIGMA_BOUNDS = (1e-2, 1e2)


@dataclass(frozen=True)
class PriceSeries:
    """Ordered daily prices with a fixed observation spacing (year fraction)."""

    timestamps: np.ndarray
    prices: np.ndarray
    dt: float = 1.0 / 365.0

    def __post_init__(self):
        t = np.asarray(self.timestamps)
        p = np.asarray(self.prices, dtype=float)
        if t.shape != p.shape or t.ndim != 1:
            raise ValueError("timestamps and prices must be one-dimensional and aligned")
        if len(p) < 2:
            raise ValueError("a price series needs at least two observations")
        if np.any(np.diff(t) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        if np.any(p < 0):
            raise ValueError("prices must be nonnegative")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "prices", p)

    @classmethod
    def from_prices(cls, prices, dt: float = 1.0 / 365.0) -> "PriceSeries":
        prices = np.asarray(prices, dtype=float)
        return cls(timestamps=np.arange(len(prices)), prices=prices, dt=dt)

    def __len__(self) -> int:
        return len(self.prices)


@dataclass(frozen=True, eq=False)
class LikelihoodResult:
    ll: float
    n_clipped: int
    n_floored: int
    terms: np.ndarray | None = None  # per-observation contributions; terms.sum() == ll


@dataclass(frozen=True)
class CalibrationRow:
    """One ladder row: fitted parameters with their fit statistics."""

    degree: int
    params: dict
    a: float
    b: float
    ll: float
    bic: float
    n_params: int
    m_obs: int
    converged: bool
    n_clipped: int = 0

    @property
    def theta_vector(self) -> np.ndarray:
        return np.array(list(self.params.values()))


@dataclass(frozen=True)
class OptimizerConfig:
    """Budgets for the global (differential evolution) and local (Nelder-Mead) stages."""

    popsize: int = 12
    maxiter: int = 120
    polish_maxiter: int = 600
    restarts: int = 0
    tol: float = 1e-6
    workers: int = 1
    de_seed_offset: int = 7919


def bic(ll: float, k: int, m_obs: int) -> float:
    """k * ln(M_obs) - 2 * LL; lower is more favourable."""
    if m_obs < 1:
        raise ValueError("m_obs must be at least 1")
    return k * math.log(m_obs) - 2.0 * ll


def one_factor_loglik(
    params: JacobiParams,
    price_map: IncreasingPolyMap,
    series: PriceSeries,
    density_config: TransitionDensityConfig = LIKELIHOOD_DENSITY_CONFIG,
) -> LikelihoodResult:
    """Exact one-factor log-likelihood with boundary clipping telemetry."""
    s_max = price_map.s_max
    eps = CLIP_FRACTION * s_max
    prices = series.prices
    n_clipped = int(np.count_nonzero((prices < eps) | (prices > s_max - eps)))
    clipped = np.clip(prices, eps, s_max - eps)
    x = np.asarray(price_map.invert(clipped))
    gaps = np.diff(series.timestamps).astype(float) * series.dt
    dens = np.empty(len(x) - 1)
    for gap in np.unique(gaps):
        kernel = JacobiTransitionKernel(params, float(gap), density_config, strict=False)
        if not kernel.converged:
            return LikelihoodResult(ll=-np.inf, n_clipped=n_clipped, n_floored=len(prices))
        sel = gaps == gap
        dens[sel] = kernel.density(x[1:][sel], x[:-1][sel])
    n_floored = int(np.count_nonzero(dens < DENSITY_FLOOR))
    terms = np.empty(len(x))
    terms[0] = log_stationary_density(params, x[0])
    terms[1:] = np.log(np.maximum(dens, DENSITY_FLOOR))
    terms -= np.log(price_map.deriv(x))
    return LikelihoodResult(ll=float(terms.sum()), n_clipped=n_clipped, n_floored=n_floored, terms=terms)


def log_likelihood(theta, series: PriceSeries, s_max: float) -> float:
    """Likelihood of the parameter vector (kappa, theta, sigma, c_1..c_n)."""
    theta = np.asarray(theta, dtype=float)
    params = JacobiParams(kappa=theta[0], theta=theta[1], sigma=theta[2])
    price_map = map_from_c(theta[3:], s_max)
    return one_factor_loglik(params, price_map, series).ll


def theta_bounds_1f(n_c: int) -> list[tuple[float, float]]:
    return [_KAPPA_BOUNDS, _THETA_BOUNDS, _SIGMA_BOUNDS] + [(-1.0, 1.0)] * n_c


def moment_start(series: PriceSeries, s_max: float) -> np.ndarray:
    """Method-of-moments start for the pure-Jacobi model under the identity map.

    theta from the sample mean, kappa from the lag-1 autocorrelation decay and
    sigma from the stationary-variance identity var = theta(1-theta)/(a+b+1).
    """
    x = np.clip(series.prices / s_max, 1e-6, 1.0 - 1e-6)
    theta_hat = float(np.clip(np.mean(x), *_THETA_BOUNDS))
    rho = float(np.corrcoef(x[:-1], x[1:])[0, 1]) if len(x) > 2 else 0.5
    rho = min(max(rho, 1e-4), 1.0 - 1e-4)
    kappa_hat = float(np.clip(-math.log(rho) / series.dt, *_KAPPA_BOUNDS))
    var = max(float(np.var(x)), 1e-8)
    ab_sum = max(theta_hat * (1.0 - theta_hat) / var - 1.0, 0.5)
    sigma_hat = float(np.clip(math.sqrt(2.0 * kappa_hat / ab_sum), *_SIGMA_BOUNDS))
    return np.array([kappa_hat, theta_hat, sigma_hat])


def embed_warm_start(theta: np.ndarray) -> np.ndarray:
    """Extend an optimum by one c entry without changing the map it encodes.

    With an even number of c's the appended entry 0 encodes the neutral linear
    factor.  With an odd count the trailing unpaired entry gamma becomes the
    pair (1/3, gamma): 1/3 encodes alpha = 0, so the pair reproduces the same
    linear factor and the previous optimum stays feasible degree by degree.
    """
    theta = np.asarray(theta, dtype=float)
    c = theta[3:]
    if len(c) % 2 == 0:
        return np.concatenate([theta, [0.0]])
    return np.concatenate([theta[:3], c[:-1], [1.0 / 3.0, c[-1]]])


def _clip_to_bounds(x: np.ndarray, bounds) -> np.ndarray:
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    return np.minimum(np.maximum(x, lo), hi)


def maximize_likelihood(
    objective,
    bounds,
    starts: list[np.ndarray],
    config: OptimizerConfig,
    seed: int,
) -> tuple[np.ndarray, float, bool]:
    """Differential evolution over box constraints followed by Nelder-Mead polish.

    starts are injected into the initial population (and always compared
    against the final answer, so a feasible warm start can never be lost).
    Returns (best_theta, best_ll, converged).
    """
    rng = np.random.default_rng(seed)
    dim = len(bounds)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])

    def neg(theta):
        value = objective(theta)
        return -value if np.isfinite(value) else 1e12

    best_theta = None
    best_ll = -np.inf
    converged = True
    for attempt in range(config.restarts + 1):
        n_pop = max(config.popsize * dim, len(starts) + 5)
        init = lo + (hi - lo) * rng.random((n_pop, dim))
        for i, s in enumerate(starts[: n_pop // 2] if attempt == 0 else []):
            init[i] = _clip_to_bounds(np.asarray(s, dtype=float), bounds)
        result = differential_evolution(
            neg,
            bounds=bounds,
            init=init,
            maxiter=config.maxiter,
            tol=config.tol,
            seed=int(seed + config.de_seed_offset * attempt),
            polish=False,
            updating="deferred",
            workers=config.workers,
        )
        converged = converged and bool(result.success)
        local = minimize(
            neg,
            result.x,
            method="Nelder-Mead",
            options={"maxiter": config.polish_maxiter, "xatol": 1e-8, "fatol": 1e-9},
        )
        cand = _clip_to_bounds(local.x, bounds) if np.isfinite(local.fun) else result.x
        for theta in (cand, result.x):
            ll = objective(theta)
            if ll > best_ll:
                best_ll, best_theta = ll, np.asarray(theta, dtype=float)
    for s in starts:
        s = _clip_to_bounds(np.asarray(s, dtype=float), bounds)
        ll = objective(s)
        if ll > best_ll:
            best_ll, best_theta = ll, s
    return best_theta, best_ll, converged


def _row_from_theta(theta: np.ndarray, series: PriceSeries, s_max: float, converged: bool) -> CalibrationRow:
    params = JacobiParams(kappa=theta[0], theta=theta[1], sigma=theta[2])
    price_map = map_from_c(theta[3:], s_max)
    res = one_factor_loglik(params, price_map, series)
    n_c = len(theta) - 3
    named = {"kappa": theta[0], "theta": theta[1], "sigma": theta[2]}
    named.update({f"c{i + 1}": theta[3 + i] for i in range(n_c)})
    m_obs = len(series)
    k = 3 + n_c
    return CalibrationRow(
        degree=n_c + 1,
        params=named,
        a=params.a,
        b=params.b,
        ll=res.ll,
        bic=bic(res.ll, k, m_obs),
        n_params=k,
        m_obs=m_obs,
        converged=converged,
        n_clipped=res.n_clipped,
    )


def fit_ladder(
    series: PriceSeries,
    s_max: float,
    max_degree: int,
    config: OptimizerConfig | None = None,
    seed: int = 0,
) -> list[CalibrationRow]:
    """Fit map degrees 1..max_degree, warm-starting each from the previous optimum.

    The pure-Jacobi fit starts from method-of-moments estimates; every later
    degree seeds its search with the embedded previous optimum, which keeps
    the log-likelihood nondecreasing along the ladder.  Optimizer
    nonconvergence is flagged per row with the best-so-far still reported.
    """
    if max_degree < 1:
        raise ValueError("max_degree must be at least 1")
    config = config or OptimizerConfig()
    rows: list[CalibrationRow] = []
    prev_theta: np.ndarray | None = None
    for n_c in range(max_degree):
        bounds = theta_bounds_1f(n_c)
        if prev_theta is None:
            starts = [moment_start(series, s_max)]
        else:
            starts = [embed_warm_start(prev_theta), np.concatenate([prev_theta, [0.0]])]

        def objective(theta):
            return log_likelihood(theta, series, s_max)

        theta, _, converged = maximize_likelihood(objective, bounds, starts, config, seed + 101 * n_c)
        rows.append(_row_from_theta(theta, series, s_max, converged))
        prev_theta = theta
    return rows
