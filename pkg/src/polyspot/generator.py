"""Matrix representations of factor-process generators on polynomial bases.

For a basis vector H(x) and a polynomial p = H(x)^T vec, the matrix G
satisfies (generator p)(x) = H(x)^T (G vec), so conditional expectations are

    E[p(X_t) | X_0 = x] = H(x)^T exp(t G) vec.

Basis orderings are fixed: monomials by degree for one factor; two-factor
total-degree bases ordered by total degree then x-power descending
(x^d, x^{d-1} y, ..., y^d); the regime basis is
(1, x, y, x^2, xy, x^3, x^2 y, ..., x^n, x^{n-1} y) with y^2 = y reduction on
the chain state space [0,1] x {0,1}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .jacobi import JacobiParams

__all__ = [
    "BasisDescriptor",
    "GeneratorMatrix",
    "build_1f",
    "build_2f_jacobi",
    "build_regime",
    "propagate",
    "expect",
    "coeff_vector_1f",
    "coeff_vector_blend",
]

_DYNAMICS_1F = ("OU", "IGBM", "CIR", "Jacobi")


@dataclass(frozen=True)
class BasisDescriptor:
    """Which basis a generator matrix lives on: kind and polynomial degree."""

    kind: str  # "monomial-1f" | "total-degree-2f" | "regime-2f"
    degree: int

    def __post_init__(self):
        if self.kind not in ("monomial-1f", "total-degree-2f", "regime-2f"):
            raise ValueError(f"unknown basis kind {self.kind!r}")
        if self.degree < 0:
            raise ValueError("degree must be nonnegative")
        if self.kind == "regime-2f" and self.degree < 1:
            raise ValueError("regime basis needs degree >= 1")

    @property
    def dimension(self) -> int:
        n = self.degree
        if self.kind == "monomial-1f":
            return n + 1
        if self.kind == "total-degree-2f":
            return (n + 1) * (n + 2) // 2
        return 2 * n + 1

    def elements(self) -> list[tuple[int, int]]:
        """Exponent pairs (i, j) meaning x^i y^j, in basis order (j = 0 for 1f)."""
        n = self.degree
        if self.kind == "monomial-1f":
            return [(k, 0) for k in range(n + 1)]
        if self.kind == "total-degree-2f":
            return [(d - j, j) for d in range(n + 1) for j in range(d + 1)]
        out = [(0, 0), (1, 0), (0, 1)]
        for d in range(2, n + 1):
            out.append((d, 0))
            out.append((d - 1, 1))
        return out[: 2 * n + 1]

    def index(self, i: int, j: int = 0) -> int:
        return self.elements().index((i, j))

    def evaluate(self, state) -> np.ndarray:
        """H(state): basis functions at a scalar x (1f) or a pair (x, y)."""
        if self.kind == "monomial-1f":
            x = float(np.asarray(state).reshape(()))
            return np.power(x, np.arange(self.degree + 1, dtype=float))
        x, y = (float(v) for v in np.asarray(state, dtype=float).reshape(2))
        return np.array([x**i * y**j for i, j in self.elements()])


@dataclass(frozen=True, eq=False)
class GeneratorMatrix:
    """Dense generator matrix (1/year) together with its basis and a dynamics tag."""

    basis: BasisDescriptor
    matrix: np.ndarray
    dynamics: str

    @property
    def dimension(self) -> int:
        return self.basis.dimension


def build_1f(dynamics: str, params, degree: int) -> GeneratorMatrix:
    """Generator on monomials 1, x, ..., x^degree for a one-factor diffusion.

    All four supported dynamics share the affine drift kappa*(theta - x); the
    squared diffusion is sigma^2 (OU), sigma^2 x^2 (IGBM), sigma^2 x (CIR) or
    sigma^2 x (1 - x) (Jacobi), so the matrix is banded with bandwidth <= 2.
    """
    if dynamics not in _DYNAMICS_1F:
        raise ValueError(f"unknown dynamics {dynamics!r}; expected one of {_DYNAMICS_1F}")
    kappa, theta, sigma = params.kappa, params.theta, params.sigma
    d0, d1 = kappa * theta, -kappa
    s2 = sigma**2
    diff2 = {  # coefficients (e0, e1, e2) of the squared diffusion in x
        "OU": (s2, 0.0, 0.0),
        "IGBM": (0.0, 0.0, s2),
        "CIR": (0.0, s2, 0.0),
        "Jacobi": (0.0, s2, -s2),
    }[dynamics]
    basis = BasisDescriptor("monomial-1f", degree)
    g = np.zeros((degree + 1, degree + 1))
    for k in range(degree + 1):
        half_kk1 = 0.5 * k * (k - 1)
        if k >= 2:
            g[k - 2, k] += diff2[0] * half_kk1
        if k >= 1:
            g[k - 1, k] += d0 * k + diff2[1] * half_kk1
        g[k, k] += d1 * k + diff2[2] * half_kk1
    return GeneratorMatrix(basis=basis, matrix=g, dynamics=dynamics)


def build_2f_jacobi(
    b1: float,
    b2: float,
    B11: float,
    B12: float,
    B21: float,
    B22: float,
    sigma: float,
    rho: float,
    degree: int,
) -> GeneratorMatrix:
    """Generator of the two-factor Jacobi system on the total-degree basis.

    dX = (b1 + B11 X + B12 Y) dt + sigma sqrt(X(1-X)) dW1,
    dY = (b2 + B21 X + B22 Y) dt + rho sqrt(Y(1-Y)) dW2, zero covariation.
    """
    basis = BasisDescriptor("total-degree-2f", degree)
    elems = basis.elements()
    pos = {e: i for i, e in enumerate(elems)}
    g = np.zeros((len(elems), len(elems)))
    s2, r2 = sigma**2, rho**2

    def add(row_exp, col, val):
        if val != 0.0:
            g[pos[row_exp], col] += val

    for col, (m, k) in enumerate(elems):
        if m >= 1:
            add((m - 1, k), col, b1 * m)
            add((m, k), col, B11 * m)
            add((m - 1, k + 1), col, B12 * m)
            add((m - 1, k), col, 0.5 * s2 * m * (m - 1))
            add((m, k), col, -0.5 * s2 * m * (m - 1))
        if k >= 1:
            add((m, k - 1), col, b2 * k)
            add((m + 1, k - 1), col, B21 * k)
            add((m, k), col, B22 * k)
            add((m, k - 1), col, 0.5 * r2 * k * (k - 1))
            add((m, k), col, -0.5 * r2 * k * (k - 1))
    return GeneratorMatrix(basis=basis, matrix=g, dynamics="double-jacobi")


def build_regime(
    b1: float,
    B11: float,
    B12: float,
    sigma: float,
    lambda01: float,
    lambda10: float,
    degree: int,
) -> GeneratorMatrix:
    """Generator of the Jacobi-with-two-state-chain system on the regime basis.

    The jump part is lambda01 (1-y) [f(x,1) - f(x,y)] + lambda10 y [f(x,0) - f(x,y)],
    which annihilates constants; y^2 = y on the state space collapses every
    image back into the 2*degree+1 dimensional basis.
    """
    if lambda01 < 0 or lambda10 < 0:
        raise ValueError("switching intensities must be nonnegative")
    basis = BasisDescriptor("regime-2f", degree)
    elems = basis.elements()
    pos = {e: i for i, e in enumerate(elems)}
    g = np.zeros((len(elems), len(elems)))
    s2 = sigma**2
    for col, (m, k) in enumerate(elems):
        if m >= 1:
            g[pos[(m - 1, k)], col] += b1 * m
            g[pos[(m, k)], col] += B11 * m
            # B12 * m * x^(m-1) y^(k+1) with y^2 -> y
            g[pos[(m - 1, 1)], col] += B12 * m
            g[pos[(m - 1, k)], col] += 0.5 * s2 * m * (m - 1)
            g[pos[(m, k)], col] -= 0.5 * s2 * m * (m - 1)
        if k == 1:
            # jump part acts only on basis elements carrying y
            g[pos[(m, 0)], col] += lambda01
            g[pos[(m, 1)], col] -= lambda01 + lambda10
    return GeneratorMatrix(basis=basis, matrix=g, dynamics="regime")


def propagate(gen: GeneratorMatrix, t: float, p: np.ndarray) -> np.ndarray:
    """exp(t G) p: coefficient vector of x -> E[p(X_t) | X_0 = x]."""
    p = np.asarray(p)
    if p.shape[0] != gen.dimension:
        raise ValueError(f"coefficient vector has length {p.shape[0]}, basis dimension is {gen.dimension}")
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return p.astype(float, copy=True) if not np.iscomplexobj(p) else p.copy()
    return expm(t * gen.matrix) @ p


def expect(gen: GeneratorMatrix, t: float, p: np.ndarray, state) -> float:
    """Conditional expectation H(state)^T exp(t G) p."""
    return float(gen.basis.evaluate(state) @ propagate(gen, t, p))


def coeff_vector_1f(gen_or_basis, coeffs: np.ndarray) -> np.ndarray:
    """Embed power-basis coefficients into a monomial-1f basis vector (zero padded)."""
    basis = gen_or_basis.basis if isinstance(gen_or_basis, GeneratorMatrix) else gen_or_basis
    if basis.kind != "monomial-1f":
        raise ValueError("coeff_vector_1f requires a monomial-1f basis")
    coeffs = np.asarray(coeffs, dtype=float)
    if len(coeffs) > basis.dimension:
        raise ValueError(f"polynomial degree {len(coeffs) - 1} exceeds basis degree {basis.degree}")
    out = np.zeros(basis.dimension)
    out[: len(coeffs)] = coeffs
    return out


def coeff_vector_blend(gen_or_basis, coeffs0: np.ndarray, coeffs1: np.ndarray) -> np.ndarray:
    """Embed (1-y) p0(x) + y p1(x) = p0(x) + y (p1 - p0)(x) into a two-factor basis."""
    basis = gen_or_basis.basis if isinstance(gen_or_basis, GeneratorMatrix) else gen_or_basis
    if basis.kind not in ("total-degree-2f", "regime-2f"):
        raise ValueError("coeff_vector_blend requires a two-factor basis")
    c0 = np.asarray(coeffs0, dtype=float)
    c1 = np.asarray(coeffs1, dtype=float)
    n = max(len(c0), len(c1))
    c0 = np.concatenate([c0, np.zeros(n - len(c0))])
    c1 = np.concatenate([c1, np.zeros(n - len(c1))])
    diff = c1 - c0
    pos = {e: i for i, e in enumerate(basis.elements())}
    out = np.zeros(basis.dimension)
    for i in range(n):
        if c0[i] != 0.0 or (i, 0) in pos:
            if (i, 0) not in pos:
                raise ValueError(f"maps of degree {n - 1} need basis degree >= {n - 1}")
            out[pos[(i, 0)]] += c0[i]
        if diff[i] != 0.0:
            if (i, 1) not in pos:
                raise ValueError(
                    f"a blend of distinct degree-{n - 1} maps needs basis degree >= {n}"
                )
            out[pos[(i, 1)]] += diff[i]
    return out
