"""Two-factor likelihood evaluation by optimal Bayes filtering.

Prices observe the latent pair exactly through s = (1-y) Phi_0(x) + y Phi_1(x),
so each observation pins x to the curve x = xhat(s, y) with Jacobian
1 / ((1-y) Phi_0'(x) + y Phi_1'(x)).  The initialize / predict / update /
normalize cycle then yields the likelihood as LL = sum_m log Z_m.

The regime model admits an exact two-point-mass filter; the double-Jacobi
model uses Gauss-Legendre quadrature in y with the posterior represented by
its values on the node grid.  A bootstrap particle filter with a narrow
Gaussian observation density serves as an independent oracle for both.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky, solve_triangular
from scipy.special import logsumexp

from .calibrate import (
    CLIP_FRACTION,
    DENSITY_FLOOR,
    LIKELIHOOD_DENSITY_CONFIG,
    CalibrationRow,
    OptimizerConfig,
    PriceSeries,
    bic,
    embed_warm_start,
    maximize_likelihood,
    moment_start,
    theta_bounds_1f,
)
from .jacobi import (
    JacobiBasis,
    JacobiParams,
    JacobiTransitionKernel,
    TransitionDensityConfig,
    eigenvalue,
    euler_step,
    log_ortho_norm,
    log_stationary_density,
    stationary_density,
    to_shape,
)
from .model import DoubleJacobiModel, RegimeModel, _chain_step
from .polymap import IncreasingPolyMap, map_from_c

__all__ = [
    "FilterResult",
    "DegeneracyWarning",
    "regime_transition",
    "xhat",
    "regime_filter_ll",
    "double_jacobi_filter_ll",
    "particle_filter_ll",
    "fit_2f",
]

_LAMBDA_BOUNDS = (1e-4, 500.0)


class DegeneracyWarning(UserWarning):
    """Posterior or particle weights collapsed onto too few support points."""


@dataclass(frozen=True)
class FilterResult:
    """Filter output: total log-likelihood, per-step log Z_m and the posterior trace."""

    ll: float
    log_z: np.ndarray
    posterior: np.ndarray  # regime: (M+1, 2) weights; double-Jacobi: (M+1, nodes) densities
    xhat: np.ndarray  # pinned x states backing the posterior support


def regime_transition(lambda01: float, lambda10: float, h: float) -> np.ndarray:
    """Two-state chain transition matrix over a step h (rows: from, columns: to).

    Off-diagonals are P_{j -> 1-j} = (lambda_{j -> 1-j} / lambda)(1 - exp(-lambda h));
    lambda = 0 gives the identity.
    """
    if h < 0:
        raise ValueError("h must be nonnegative")
    if lambda01 < 0 or lambda10 < 0:
        raise ValueError("intensities must be nonnegative")
    lam = lambda01 + lambda10
    if lam == 0.0 or h == 0.0:
        return np.eye(2)
    decay = -math.expm1(-lam * h)
    p01 = lambda01 / lam * decay
    p10 = lambda10 / lam * decay
    return np.array([[1.0 - p01, p01], [p10, 1.0 - p10]])


def xhat(map0: IncreasingPolyMap, map1: IncreasingPolyMap, s, y):
    """Solve (1-y) Phi_0(x) + y Phi_1(x) = s for the unique x in [0, 1].

    The convex combination of increasing maps is increasing, so plain
    bisection plus safeguarded Newton converges to |residual| <= 1e-12 s_max.
    Broadcasts over s and y.
    """
    s_arr, y_arr = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(y, dtype=float))
    s_max = map0.s_max
    if np.any(s_arr < 0.0) or np.any(s_arr > s_max):
        raise ValueError(f"price outside [0, {s_max}]")
    c0, c1 = map0.Phi_coeffs, map1.Phi_coeffs
    n = max(len(c0), len(c1))
    c0 = np.concatenate([c0, np.zeros(n - len(c0))])
    c1 = np.concatenate([c1, np.zeros(n - len(c1))])
    # blend coefficients per element: shape (n,) + broadcast shape
    coeffs = c0.reshape((n,) + (1,) * s_arr.ndim) * (1.0 - y_arr) + c1.reshape((n,) + (1,) * s_arr.ndim) * y_arr
    dcoeffs = coeffs[1:] * np.arange(1, n).reshape((n - 1,) + (1,) * s_arr.ndim)

    def val(x, c):
        out = np.zeros_like(x)
        for ck in c[::-1]:
            out = out * x + ck
        return out

    lo = np.zeros_like(s_arr)
    hi = np.ones_like(s_arr)
    for _ in range(55):
        mid = 0.5 * (lo + hi)
        high_side = val(mid, coeffs) >= s_arr
        hi = np.where(high_side, mid, hi)
        lo = np.where(high_side, lo, mid)
    x = 0.5 * (lo + hi)
    for _ in range(3):
        f = val(x, coeffs) - s_arr
        d = val(x, dcoeffs)
        step = np.where(d > 0.0, f / np.where(d > 0.0, d, 1.0), 0.0)
        x = np.clip(x - step, lo, hi)
    return float(x) if np.isscalar(s) and np.isscalar(y) else x


def _blend_deriv(map0: IncreasingPolyMap, map1: IncreasingPolyMap, x, y):
    return (1.0 - y) * map0.deriv(x) + y * map1.deriv(x)


def _clip_prices(prices: np.ndarray, s_max: float) -> np.ndarray:
    eps = CLIP_FRACTION * s_max
    return np.clip(prices, eps, s_max - eps)


def regime_filter_ll(
    model: RegimeModel,
    series: PriceSeries,
    y0_weights: tuple[float, float] | None = None,
    density_config: TransitionDensityConfig = LIKELIHOOD_DENSITY_CONFIG,
) -> FilterResult:
    """Exact two-point-mass filter for the regime-switching model.

    The posterior after observing s_m is two weighted point masses at
    (xhat(s_m, j), j); prediction mixes them through the chain matrix and the
    Jacobi transition kernel.  The prior is the stationary Beta for X times
    the stationary chain weights (lambda10/lambda, lambda01/lambda) unless
    y0_weights overrides them.  All accumulation is in log space.
    """
    lam = model.lambda01 + model.lambda10
    if y0_weights is None:
        if lam == 0.0:
            raise ValueError("lambda01 + lambda10 = 0 has no stationary chain law; pass y0_weights")
        y0_weights = (model.lambda10 / lam, model.lambda01 / lam)
    prior_y = np.asarray(y0_weights, dtype=float)
    if prior_y.shape != (2,) or np.any(prior_y < 0) or not math.isclose(prior_y.sum(), 1.0, rel_tol=1e-9):
        raise ValueError("y0_weights must be two nonnegative numbers summing to one")

    s = _clip_prices(series.prices, model.s_max)
    m_total = len(s)
    # pinned states and Jacobians for both regimes at every observation
    x_pin = np.stack([np.asarray(xhat(model.map0, model.map1, s, float(j))) for j in (0.0, 1.0)], axis=1)
    jac = np.stack([model.map0.deriv(x_pin[:, 0]), model.map1.deriv(x_pin[:, 1])], axis=1)
    chain = regime_transition(model.lambda01, model.lambda10, series.dt)
    kernel = JacobiTransitionKernel(model.x_factor, series.dt, density_config, strict=False)

    log_z = np.empty(m_total)
    weights = np.empty((m_total, 2))
    # initialization + first update: predicted density is the stationary law
    log_p0 = log_stationary_density(model.x_factor, x_pin[0]) + np.log(
        np.maximum(prior_y, DENSITY_FLOOR)
    )
    log_u = log_p0 - np.log(jac[0])
    log_z[0] = logsumexp(log_u)
    weights[0] = np.exp(log_u - log_z[0])
    # transition densities between consecutive pinned states, all steps at once:
    # trans[m, j_prev, j] = p_X(x_pin[m+1, j]; x_pin[m, j_prev])
    trans = np.maximum(kernel.density(x_pin[1:, None, :], x_pin[:-1, :, None]), DENSITY_FLOOR)
    scale = trans.max(axis=(1, 2))  # per-step rescaling keeps Z_m in log space
    for m in range(1, m_total):
        mix = (weights[m - 1][:, None] * chain) * (trans[m - 1] / scale[m - 1])
        u = mix.sum(axis=0) / jac[m]
        z = u.sum()
        log_z[m] = math.log(z) + math.log(scale[m - 1])
        weights[m] = u / z
    ll = float(np.sum(log_z))
    return FilterResult(ll=ll, log_z=log_z, posterior=weights, xhat=x_pin)


def double_jacobi_filter_ll(
    model: DoubleJacobiModel,
    series: PriceSeries,
    n_nodes: int = 32,
    y_prior: np.ndarray | None = None,
    x_density_config: TransitionDensityConfig = LIKELIHOOD_DENSITY_CONFIG,
) -> FilterResult:
    """Gauss-Legendre quadrature filter for the double-Jacobi model.

    The posterior after s_m is a density over y on the node grid, supported on
    the observation curve x = xhat(s_m, y).  Prediction integrates the product
    transition kernel against it with the node weights; the y-kernel series is
    truncated at the node count, which acts on the quadrature subspace as the
    exact spectral damping of the resolvable modes (slowly moving factors
    degrade gracefully to a frozen projection instead of overweighting an
    unresolvable spike).

    y_prior overrides the stationary Beta prior with density values on the
    nodes (it is renormalized against the node weights).
    """
    if n_nodes < 8:
        raise ValueError("need at least 8 quadrature nodes")
    nodes, wq = np.polynomial.legendre.leggauss(n_nodes)
    nodes = 0.5 * (nodes + 1.0)
    wq = 0.5 * wq

    s = _clip_prices(series.prices, model.s_max)
    m_total = len(s)
    # pinned x states along the observation curve for every step and node
    x_pin = np.empty((m_total, n_nodes))
    for i, y in enumerate(nodes):
        x_pin[:, i] = xhat(model.map0, model.map1, s, float(y))
    jac = _blend_deriv(model.map0, model.map1, x_pin, nodes[None, :])

    x_kernel = JacobiTransitionKernel(model.x_factor, series.dt, x_density_config, strict=False)
    # Discrete spectral form of the y-prediction kernel.  The eigenfunction
    # modes are re-orthonormalized against the node quadrature (Cholesky
    # whitening), which makes the step operator a symmetric contraction with
    # exact mass conservation: slowly moving factors degrade gracefully to a
    # stable projection instead of amplifying quadrature-resolution artifacts.
    k_y = _spectral_y_kernel(model.y_factor, series.dt, nodes, wq, n_nodes)

    if y_prior is None:
        prior = stationary_density(model.y_factor, nodes)
    else:
        prior = np.asarray(y_prior, dtype=float)
        if prior.shape != nodes.shape or np.any(prior < 0):
            raise ValueError(f"y_prior must be {n_nodes} nonnegative density values")
    prior = prior / np.sum(wq * prior)

    log_z = np.empty(m_total)
    post = np.empty((m_total, n_nodes))
    log_wx0 = log_stationary_density(model.x_factor, x_pin[0])
    u = np.exp(log_wx0 - np.max(log_wx0)) * prior / jac[0]
    z = np.sum(wq * u)
    log_z[0] = math.log(z) + np.max(log_wx0)
    post[0] = u / z
    for m in range(1, m_total):
        # k_x[i, j] = p_X(xhat(s_m, y_i); xhat(s_{m-1}, y_j))
        k_x = np.maximum(x_kernel.density(x_pin[m][:, None], x_pin[m - 1][None, :]), 0.0)
        scale = k_x.max()
        if not scale > 0.0:
            log_z[m:] = -np.inf
            post[m:] = 0.0
            return FilterResult(ll=-np.inf, log_z=log_z, posterior=post, xhat=x_pin)
        pred = np.maximum(((k_x / scale) * k_y) @ (wq * post[m - 1]), 0.0)
        u = pred / jac[m]
        z = float(np.sum(wq * u))
        if not z > 0.0:
            log_z[m:] = -np.inf
            post[m:] = 0.0
            return FilterResult(ll=-np.inf, log_z=log_z, posterior=post, xhat=x_pin)
        log_z[m] = math.log(z) + math.log(scale)
        post[m] = u / z
        if np.count_nonzero(wq * post[m] > 1e-6) < 3:
            warnings.warn(
                f"posterior mass concentrated on fewer than 3 nodes at step {m}",
                DegeneracyWarning,
                stacklevel=2,
            )
    ll = float(np.sum(log_z))
    return FilterResult(ll=ll, log_z=log_z, posterior=post, xhat=x_pin)


def _spectral_y_kernel(params: JacobiParams, dt: float, nodes: np.ndarray, wq: np.ndarray, n_modes: int) -> np.ndarray:
    """Node-grid transition kernel built from discretely orthonormalized modes.

    Returns K with K[i, j] ~ p(y_i, dt; y_j) such that the prediction
    K @ (wq * f) is a symmetric contraction in the weighted frame, conserves
    probability mass exactly and degenerates to a stable projection as the
    damping factors approach one.
    """
    a, b = to_shape(params)
    basis = JacobiBasis(u=a + b - 1.0, v=a, max_degree=n_modes - 1)
    psi = basis.values(nodes)
    w_y = stationary_density(params, nodes)
    frame = np.sqrt(wq * w_y)
    sqrt_k = np.exp(0.5 * log_ortho_norm(a, b, np.arange(n_modes)))
    raw = sqrt_k[:, None] * psi * frame[None, :]
    gram = raw @ raw.T
    try:
        low = cholesky(gram, lower=True)
    except np.linalg.LinAlgError:
        low = cholesky(gram + np.trace(gram) / n_modes * 1e-10 * np.eye(n_modes), lower=True)
    modes = solve_triangular(low, raw, lower=True)
    damp = np.exp(-eigenvalue(params, np.arange(n_modes)) * dt)
    step = modes.T @ (damp[:, None] * modes)
    return (frame[:, None] / wq[:, None]) * step / frame[None, :]


def _observe(model, x, y):
    return (1.0 - y) * model.map0.eval(x) + y * model.map1.eval(x)


def _particle_filter_once(
    model,
    series: PriceSeries,
    n_particles: int,
    delta_obs: float,
    substeps: int,
    rng: np.random.Generator,
) -> float:
    """One bootstrap particle filter pass; returns the log-likelihood estimate."""
    is_regime = isinstance(model, RegimeModel)
    fx = model.x_factor
    x = rng.beta(fx.a, fx.b, size=n_particles)
    if is_regime:
        lam = model.lambda01 + model.lambda10
        p_up = model.lambda01 / lam if lam > 0 else 0.0
        y = (rng.random(n_particles) < p_up).astype(float)
    else:
        fy = model.y_factor
        y = rng.beta(fy.a, fy.b, size=n_particles)
    s = _clip_prices(series.prices, model.s_max)
    log_norm = -math.log(delta_obs) - 0.5 * math.log(2.0 * math.pi)
    ll = 0.0
    for m in range(len(s)):
        if m > 0:
            x = euler_step(fx, x, series.dt, substeps, rng)
            if is_regime:
                y = _chain_step(y, model.lambda01, model.lambda10, series.dt, rng)
            else:
                y = euler_step(model.y_factor, y, series.dt, substeps, rng)
        log_w = log_norm - 0.5 * ((s[m] - _observe(model, x, y)) / delta_obs) ** 2
        ll += float(logsumexp(log_w) - math.log(n_particles))
        w = np.exp(log_w - np.max(log_w))
        w_sum = w.sum()
        ess = w_sum**2 / np.sum(w**2)
        if ess < 10.0:
            warnings.warn(f"effective sample size {ess:.1f} at step {m}", DegeneracyWarning, stacklevel=3)
        # systematic resampling
        positions = (rng.random() + np.arange(n_particles)) / n_particles
        idx = np.searchsorted(np.cumsum(w / w_sum), positions)
        idx = np.minimum(idx, n_particles - 1)
        x = x[idx]
        y = y[idx]
    return ll


def particle_filter_ll(
    model,
    series: PriceSeries,
    n_particles: int = 100_000,
    seed: int = 0,
    delta_obs: float | None = None,
    n_boot: int = 20,
    substeps: int = 16,
) -> tuple[float, float]:
    """Bootstrap particle-filter log-likelihood with a seed-bootstrap standard error.

    The Dirac observation density is replaced by a Gaussian of width delta_obs
    (default 1e-3 * s_max).  n_boot independently seeded replicates give the
    estimate (their mean) and its standard error.
    """
    if n_particles < 1000:
        raise ValueError("need at least 1000 particles")
    if not isinstance(model, (RegimeModel, DoubleJacobiModel)):
        raise TypeError("particle filter supports regime and double-Jacobi models")
    if delta_obs is None:
        delta_obs = 1e-3 * model.s_max
    lls = np.array(
        [
            _particle_filter_once(model, series, n_particles, delta_obs, substeps, np.random.default_rng(seed + 1000 * r))
            for r in range(n_boot)
        ]
    )
    return float(np.mean(lls)), float(np.std(lls, ddof=1) / math.sqrt(n_boot))


def _regime_model_from_theta(theta: np.ndarray, s_max: float) -> RegimeModel:
    n_c = (len(theta) - 5) // 2
    return RegimeModel(
        x_factor=JacobiParams(kappa=theta[0], theta=theta[1], sigma=theta[2]),
        lambda01=theta[3],
        lambda10=theta[4],
        map0=map_from_c(theta[5 : 5 + n_c], s_max),
        map1=map_from_c(theta[5 + n_c :], s_max),
    )


def _dj_model_from_theta(theta: np.ndarray, s_max: float) -> DoubleJacobiModel:
    n_c = (len(theta) - 6) // 2
    return DoubleJacobiModel(
        x_factor=JacobiParams(kappa=theta[0], theta=theta[1], sigma=theta[2]),
        y_factor=JacobiParams(kappa=theta[3], theta=theta[4], sigma=theta[5]),
        map0=map_from_c(theta[6 : 6 + n_c], s_max),
        map1=map_from_c(theta[6 + n_c :], s_max),
    )


def two_factor_loglik(kind: str, theta: np.ndarray, series: PriceSeries, s_max: float, n_nodes: int = 32) -> float:
    theta = np.asarray(theta, dtype=float)
    try:
        if kind == "regime":
            return regime_filter_ll(_regime_model_from_theta(theta, s_max), series).ll
        if kind == "double_jacobi":
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DegeneracyWarning)
                return double_jacobi_filter_ll(_dj_model_from_theta(theta, s_max), series, n_nodes).ll
    except (ValueError, FloatingPointError):
        return -np.inf
    raise ValueError(f"unknown model kind {kind!r}")


def fit_2f(
    kind: str,
    series: PriceSeries,
    s_max: float,
    max_degree: int,
    config: OptimizerConfig | None = None,
    seed: int = 0,
    n_nodes: int = 32,
) -> list[CalibrationRow]:
    """Degree ladder for the two-factor models, mirroring the one-factor machinery.

    Parameter counts are k = 5 + 2n (regime) and k = 6 + 2n (double-Jacobi)
    for degree-(n+1) maps.
    """
    if kind not in ("regime", "double_jacobi"):
        raise ValueError(f"unknown model kind {kind!r}")
    if max_degree < 1:
        raise ValueError("max_degree must be at least 1")
    config = config or OptimizerConfig()
    n_base = 5 if kind == "regime" else 6
    rows: list[CalibrationRow] = []
    prev_theta: np.ndarray | None = None
    for n_c in range(max_degree):
        base = theta_bounds_1f(0)
        if kind == "regime":
            bounds = base + [_LAMBDA_BOUNDS, _LAMBDA_BOUNDS] + [(-1.0, 1.0)] * (2 * n_c)
        else:
            bounds = base + base + [(-1.0, 1.0)] * (2 * n_c)
        if prev_theta is None:
            ms = moment_start(series, s_max)
            if kind == "regime":
                starts = [np.concatenate([ms, [20.0, 100.0]]), np.concatenate([ms, [5.0, 5.0]])]
            else:
                starts = [np.concatenate([ms, [5.0, 0.5, 1.0]]), np.concatenate([ms, ms])]
        else:
            starts = [_embed_2f(prev_theta, n_base), _append_zero_2f(prev_theta, n_base)]

        def objective(theta):
            return two_factor_loglik(kind, theta, series, s_max, n_nodes)

        theta, ll, converged = maximize_likelihood(objective, bounds, starts, config, seed + 211 * n_c)
        k = n_base + 2 * n_c
        m_obs = len(series)
        named = _named_2f(kind, theta, n_c)
        a = 2.0 * theta[0] * theta[1] / theta[2] ** 2
        b = 2.0 * theta[0] * (1.0 - theta[1]) / theta[2] ** 2
        rows.append(
            CalibrationRow(
                degree=n_c + 1,
                params=named,
                a=a,
                b=b,
                ll=ll,
                bic=bic(ll, k, m_obs),
                n_params=k,
                m_obs=m_obs,
                converged=converged,
            )
        )
        prev_theta = theta
    return rows


def _named_2f(kind: str, theta: np.ndarray, n_c: int) -> dict:
    if kind == "regime":
        named = {
            "kappa": theta[0],
            "theta": theta[1],
            "sigma": theta[2],
            "lambda01": theta[3],
            "lambda10": theta[4],
        }
        off = 5
    else:
        named = {
            "kappa_x": theta[0],
            "theta_x": theta[1],
            "sigma_x": theta[2],
            "kappa_y": theta[3],
            "theta_y": theta[4],
            "sigma_y": theta[5],
        }
        off = 6
    named.update({f"c0_{i + 1}": theta[off + i] for i in range(n_c)})
    named.update({f"c1_{i + 1}": theta[off + n_c + i] for i in range(n_c)})
    return named


def _embed_2f(theta: np.ndarray, n_base: int) -> np.ndarray:
    """Extend both map c-vectors by the feasibility-preserving embedding."""
    n_c = (len(theta) - n_base) // 2
    c0 = embed_warm_start(np.concatenate([np.zeros(3), theta[n_base : n_base + n_c]]))[3:]
    c1 = embed_warm_start(np.concatenate([np.zeros(3), theta[n_base + n_c :]]))[3:]
    return np.concatenate([theta[:n_base], c0, c1])


def _append_zero_2f(theta: np.ndarray, n_base: int) -> np.ndarray:
    """Plain append-zero extension of both c-vectors (second warm-start candidate)."""
    n_c = (len(theta) - n_base) // 2
    return np.concatenate(
        [theta[:n_base], theta[n_base : n_base + n_c], [0.0], theta[n_base + n_c :], [0.0]]
    )
