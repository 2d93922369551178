import numpy as np
import pytest
from numpy.testing import assert_allclose

import polyspot as ps
from polyspot.polymap import ALPHA_MAX, ALPHA_MIN, IncreasingPolyMap, PriceRangeError, QuadFactor


def beta_bar_bisection(alpha, grid=None):
    """Independent oracle: largest beta keeping min over a grid of q >= 0."""
    if grid is None:
        grid = np.linspace(-1.0, 1.0, 2001)

    def q_min(beta):
        return np.min(alpha * grid**2 + 2.0 * beta * grid + 1.0 - 2.0 / 3.0 * alpha)

    lo, hi = 0.0, 2.0
    if q_min(lo) < 0:
        return 0.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if q_min(mid) >= 0:
            lo = mid
        else:
            hi = mid
    return lo


class TestBetaBar:
    def test_cone_apex(self):
        assert ps.beta_bar(-3.0) == pytest.approx(0.0, abs=1e-15)

    def test_branch_crossover_continuous(self):
        eps = 1e-12
        assert ps.beta_bar(0.6) == pytest.approx(0.6, rel=1e-12)
        assert ps.beta_bar(0.6 - eps) == pytest.approx(ps.beta_bar(0.6 + eps), abs=1e-9)

    def test_upper_alpha_limit(self):
        assert ps.beta_bar(1.5) == pytest.approx(0.0, abs=1e-7)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            ps.beta_bar(-3.1)
        with pytest.raises(ValueError):
            ps.beta_bar(1.6)

    def test_matches_bisection_oracle_on_200_points(self):
        alphas = np.linspace(ALPHA_MIN, ALPHA_MAX, 200)
        for alpha in alphas:
            assert ps.beta_bar(alpha) == pytest.approx(beta_bar_bisection(alpha), abs=1e-3)

    def test_admissible_factors_nonnegative_on_fine_grid(self):
        rng = np.random.default_rng(5)
        grid = np.linspace(-1.0, 1.0, 2001)
        for _ in range(100):
            alpha = rng.uniform(ALPHA_MIN, ALPHA_MAX)
            beta = rng.uniform(-1, 1) * ps.beta_bar(alpha)
            f = QuadFactor(alpha=alpha, beta=beta)
            assert np.min(f(grid)) >= -1e-9


class TestMapFromC:
    def test_empty_vector_gives_identity(self):
        m = ps.map_from_c([], 1000.0)
        assert m.degree == 1
        x = np.linspace(0, 1, 11)
        assert_allclose(m.eval(x), 1000.0 * x, rtol=1e-14)

    def test_zero_entry_encodes_neutral_factor(self):
        m = ps.map_from_c([0.0], 1000.0)
        x = np.linspace(0, 1, 11)
        assert_allclose(m.eval(x), 1000.0 * x, rtol=1e-13, atol=1e-10)
        assert m.degree == 2  # structural degree keeps the zero top coefficient

    def test_length_four_gives_degree_five(self):
        m = ps.map_from_c([0.17, 0.91, 0.96, 0.59], 1000.0)
        assert m.degree == 5
        assert len(m.Phi_coeffs) == 6

    def test_rejects_out_of_box_entries(self):
        with pytest.raises(ValueError):
            ps.map_from_c([1.5], 100.0)

    def test_exact_endpoints_and_monotonicity(self):
        rng = np.random.default_rng(17)
        x = np.linspace(0.0, 1.0, 501)
        for n in (0, 1, 2, 3, 4, 5):
            for _ in range(20):
                c = rng.uniform(-1, 1, size=n)
                m = ps.map_from_c(c, 750.0)
                assert m.eval(0.0) == 0.0
                assert m.eval(1.0) == 750.0
                assert np.all(m.deriv(x) >= -1e-9 * 750.0)
                assert np.all(np.diff(m.eval(x)) >= -1e-9 * 750.0)
                assert m.degree == n + 1


class TestEvalDerivInvert:
    def test_invert_roundtrip_on_grid(self):
        x = np.linspace(0.0, 1.0, 1001)
        for c in ([], [0.93, 0.61], [0.17, 0.91, 0.96, 0.59], [-0.5, 0.3, 0.8]):
            m = ps.map_from_c(c, 1000.0)
            assert np.max(np.abs(m.invert(m.eval(x)) - x)) < 1e-10

    def test_identity_map_invert(self):
        m = ps.map_from_c([], 500.0)
        s = np.linspace(0.0, 500.0, 101)
        assert_allclose(m.invert(s), s / 500.0, atol=1e-13)

    def test_invert_residual_tolerance(self):
        m = ps.map_from_c([0.9, 0.6], 1000.0)
        rng = np.random.default_rng(3)
        s = rng.uniform(0.0, 1000.0, 500)
        x = m.invert(s)
        assert np.max(np.abs(m.eval(x) - s)) <= 1e-12 * 1000.0

    def test_invert_rejects_out_of_range_prices(self):
        m = ps.map_from_c([0.5], 1000.0)
        with pytest.raises(PriceRangeError):
            m.invert(-1.0)
        with pytest.raises(PriceRangeError):
            m.invert(1000.5)

    def test_degree_three_map_against_independent_expansion(self):
        # oracle coded separately with exact rational arithmetic
        import sympy as sp

        c1, c2 = sp.Rational(93, 100), sp.Rational(61, 100)
        alpha = -3 + (c1 + 1) * sp.Rational(9, 4) / 1
        # corrected admissible-beta boundary, exact on both branches
        beta_bar_sym = sp.sqrt(alpha - sp.Rational(2, 3) * alpha**2) if alpha > sp.Rational(3, 5) else sp.Rational(1, 2) + alpha / 6
        beta = c2 * beta_bar_sym
        x = sp.symbols("x")
        z = 2 * x - 1
        phi = alpha * z**2 + 2 * beta * z + 1 - sp.Rational(2, 3) * alpha
        big = sp.integrate(phi, (x, 0, x))
        phi_map = sp.expand(1000 * big / big.subs(x, 1))

        m = ps.map_from_c([0.93, 0.61], 1000.0)
        assert m.eval(1.0) == 1000.0
        grid = np.linspace(0, 1, 41)
        vals = np.array([float(phi_map.subs(x, sp.Float(g, 30))) for g in grid])
        assert_allclose(m.eval(grid), vals, rtol=1e-9, atol=1e-8)
        assert np.all(np.diff(m.eval(np.linspace(0, 1, 2001))) > 0)


class TestFactorValidation:
    def test_rejects_negative_quadratic(self):
        with pytest.raises(ValueError):
            QuadFactor(alpha=1.0, beta=1.0)  # beta_bar(1) = sqrt(1/3) < 1

    def test_rejects_alpha_out_of_range(self):
        with pytest.raises(ValueError):
            QuadFactor(alpha=2.0, beta=0.0)

    def test_from_factors_structural_degree(self):
        f = QuadFactor(alpha=0.5, beta=0.2)
        m = IncreasingPolyMap.from_factors([f, f], 100.0)
        assert m.degree == 5
