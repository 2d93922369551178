"""Increasing polynomial price maps Phi: [0,1] -> [0, s_max].

A map is built as the normalized integral of a product of quadratic factors

    q(z) = alpha z^2 + 2 beta z + 1 - (2/3) alpha,   z = 2x - 1,

each nonnegative on [-1, 1].  The admissible (alpha, beta) region is the cone
2|beta| <= 1 + alpha/3 for alpha <= 3/5 joined with the ellipse
beta^2 <= alpha - (2/3) alpha^2 for alpha in (3/5, 3/2]; the two branches meet
continuously at alpha = 3/5 with value 3/5.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly

__all__ = [
    "ALPHA_MIN",
    "ALPHA_MAX",
    "PriceRangeError",
    "QuadFactor",
    "IncreasingPolyMap",
    "beta_bar",
    "map_from_c",
]

ALPHA_MIN = -3.0
ALPHA_MAX = 1.5
_BRANCH = 0.6  # crossover between the endpoint cone and the vertex ellipse

_CHECK_GRID = np.linspace(-1.0, 1.0, 1001)


class PriceRangeError(ValueError):
    """A price fell outside [0, s_max] (signals bad price data)."""


def beta_bar(alpha):
    """Largest |beta| keeping q_{alpha,beta} nonnegative on [-1, 1].

    Piecewise: 1/2 + alpha/6 on [-3, 3/5] (endpoint values bind) and
    sqrt(alpha - (2/3) alpha^2) on (3/5, 3/2] (interior vertex binds).
    """
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha < ALPHA_MIN - 1e-12) or np.any(alpha > ALPHA_MAX + 1e-12):
        raise ValueError(f"alpha must lie in [{ALPHA_MIN}, {ALPHA_MAX}]")
    cone = 0.5 + alpha / 6.0
    with np.errstate(invalid="ignore"):
        ellipse = np.sqrt(np.maximum(alpha - (2.0 / 3.0) * alpha**2, 0.0))
    out = np.where(alpha <= _BRANCH, cone, ellipse)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class QuadFactor:
    """One quadratic factor q(z) = alpha z^2 + 2 beta z + 1 - (2/3) alpha."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (ALPHA_MIN - 1e-12 <= self.alpha <= ALPHA_MAX + 1e-12):
            raise ValueError(f"alpha={self.alpha} outside [{ALPHA_MIN}, {ALPHA_MAX}]")
        if np.min(self(_CHECK_GRID)) < -1e-12:
            raise ValueError(f"q(alpha={self.alpha}, beta={self.beta}) is negative on [-1, 1]")

    def __call__(self, z):
        return self.alpha * np.asarray(z) ** 2 + 2.0 * self.beta * np.asarray(z) + 1.0 - (2.0 / 3.0) * self.alpha

    def coeffs_z(self) -> np.ndarray:
        return np.array([1.0 - (2.0 / 3.0) * self.alpha, 2.0 * self.beta, self.alpha])


@dataclass(frozen=True, eq=False)
class IncreasingPolyMap:
    """An increasing polynomial Phi: [0,1] -> [0, s_max] with Phi(0)=0, Phi(1)=s_max.

    phi_coeffs holds the raw factor product phi (power basis in x, low to
    high); Phi_coeffs the normalized integral scaled by s_max; deriv_coeffs
    its derivative (s_max * phi / int phi), so eval/deriv/invert are mutually
    consistent.  Instances are immutable and freely shareable.
    """

    factors: tuple[QuadFactor, ...]
    s_max: float
    phi_coeffs: np.ndarray
    Phi_coeffs: np.ndarray
    deriv_coeffs: np.ndarray

    @classmethod
    def from_factors(cls, factors, s_max: float, degree: int | None = None) -> "IncreasingPolyMap":
        """Build the map; degree is the structural degree of the factor product
        (defaults to 2 * len(factors); degenerate factors keep their zero top
        coefficients so coefficient-vector lengths stay predictable)."""
        if s_max <= 0:
            raise ValueError("s_max must be positive")
        factors = tuple(factors)
        if degree is None:
            degree = 2 * len(factors)
        phi_z = np.array([1.0])
        for f in factors:
            phi_z = npoly.polymul(phi_z, f.coeffs_z())
        # substitute z = 2x - 1
        phi_x = _compose_affine(phi_z)
        if len(phi_x) < degree + 1:
            phi_x = np.concatenate([phi_x, np.zeros(degree + 1 - len(phi_x))])
        big = npoly.polyint(phi_x)
        norm = npoly.polyval(1.0, big) - big[0]
        if norm <= 0:
            raise ValueError("factor product integrates to a nonpositive value")
        coeffs = big * (s_max / norm)
        coeffs[0] = 0.0
        # pin the linear coefficient so the coefficient sum equals s_max to
        # within an ulp (eval returns the exact endpoint values themselves)
        partial = 0.0
        for ck in coeffs[:1:-1]:
            partial += ck
        coeffs[1] = s_max - partial
        return cls(
            factors=factors,
            s_max=float(s_max),
            phi_coeffs=phi_x,
            Phi_coeffs=coeffs,
            deriv_coeffs=npoly.polyder(coeffs),
        )

    @property
    def degree(self) -> int:
        return len(self.Phi_coeffs) - 1

    def eval(self, x):
        """Price Phi(x) for x in [0, 1]; the endpoint values 0 and s_max are exact."""
        x = np.asarray(x, dtype=float)
        out = npoly.polyval(x, self.Phi_coeffs)
        # the construction makes the endpoints exact; polynomial evaluation
        # only gets within an ulp, so pin them
        out = np.where(x == 0.0, 0.0, np.where(x == 1.0, self.s_max, out))
        return float(out) if out.ndim == 0 else out

    def deriv(self, x):
        """Slope Phi'(x) >= 0."""
        return npoly.polyval(np.asarray(x, dtype=float), self.deriv_coeffs)

    def invert(self, s):
        """The unique x in [0, 1] with Phi(x) = s, to |Phi(x) - s| <= 1e-12 * s_max.

        Bracketed bisection refined by Newton steps safeguarded to stay inside
        the bracket.  Raises PriceRangeError for s outside [0, s_max].
        """
        s_arr = np.asarray(s, dtype=float)
        if np.any(s_arr < 0.0) or np.any(s_arr > self.s_max):
            raise PriceRangeError(f"price outside [0, {self.s_max}]")
        lo = np.zeros_like(s_arr, dtype=float)
        hi = np.ones_like(s_arr, dtype=float)
        for _ in range(55):
            mid = 0.5 * (lo + hi)
            high_side = npoly.polyval(mid, self.Phi_coeffs) >= s_arr
            hi = np.where(high_side, mid, hi)
            lo = np.where(high_side, lo, mid)
        x = 0.5 * (lo + hi)
        for _ in range(3):
            f = npoly.polyval(x, self.Phi_coeffs) - s_arr
            d = npoly.polyval(x, self.deriv_coeffs)
            step = np.where(d > 0.0, f / np.where(d > 0.0, d, 1.0), 0.0)
            x = np.clip(x - step, lo, hi)
        if s_arr.ndim == 0:
            return float(x)
        return x


def _compose_affine(coeffs_z: np.ndarray) -> np.ndarray:
    """Coefficients in x of p(2x - 1) given coefficients of p(z)."""
    out = np.array([0.0])
    zpow = np.array([1.0])
    affine = np.array([-1.0, 2.0])
    for c in coeffs_z:
        out = npoly.polyadd(out, c * zpow)
        zpow = npoly.polymul(zpow, affine)
    return out


def map_from_c(c, s_max: float) -> IncreasingPolyMap:
    """Build a map from a vector c in [-1, 1]^n; the result has degree n + 1.

    Consecutive pairs (c_{2i-1}, c_{2i}) encode a factor via
    alpha = -3 + (c_{2i-1} + 1) * (3/2 + 3) / 2 and beta = c_{2i} * beta_bar(alpha);
    an unpaired final entry encodes the degenerate linear factor
    (alpha = 0, beta = c * beta_bar(0)).  The encoding is total on [-1, 1]^n.
    """
    c = np.asarray(c, dtype=float)
    if c.ndim != 1 and c.size > 0:
        raise ValueError("c must be a one-dimensional vector")
    if c.size and (np.min(c) < -1.0 or np.max(c) > 1.0):
        raise ValueError("all entries of c must lie in [-1, 1]")
    factors = []
    n_pairs = c.size // 2
    for i in range(n_pairs):
        alpha = ALPHA_MIN + (c[2 * i] + 1.0) * (ALPHA_MAX - ALPHA_MIN) / 2.0
        factors.append(QuadFactor(alpha=alpha, beta=c[2 * i + 1] * beta_bar(alpha)))
    if c.size % 2:
        factors.append(QuadFactor(alpha=0.0, beta=c[-1] * beta_bar(0.0)))
    return IncreasingPolyMap.from_factors(factors, s_max, degree=c.size)
