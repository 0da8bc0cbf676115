# gmac/test_numerics.py
"""
Tests for the J-function, mixture entropy, quadrature, LP front end and
binomial intervals.
"""
import itertools
import math
import os
import sys

import numpy as np
import pytest

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from gmac.errors import DomainError, LpUnboundedError
from gmac.numerics import (GaussianMixture, LinearProgram, composite_legendre, j_function, j_inverse,
                           lp_solve, mixture_entropy, mixture_logpdf, mixture_pdf, wilson_interval)

GAUSS_ENTROPY = 0.5 * math.log2(2.0 * math.pi * math.e)


def _mc_j(sigma, samples=1_000_000, seed=7):
    rng = np.random.default_rng(seed)
    llr = rng.normal(sigma ** 2 / 2.0, sigma, samples)
    return 1.0 - np.mean(np.logaddexp(0.0, -llr)) / math.log(2.0)


class TestJFunction:

    def test_zero_and_saturation(self):
        for method in ("closed_form", "piecewise", "exact"):
            assert j_function(0.0, method) == pytest.approx(0.0, abs=1e-12)
            assert j_function(1e6, method) == pytest.approx(1.0, abs=1e-9)

    def test_matches_sampled_llrs(self):
        """J(2) against 1 - E[log2(1 + e^-L)] with L ~ N(2, 4)."""
        oracle = _mc_j(2.0)
        assert j_function(2.0) == pytest.approx(oracle, abs=2e-3)
        assert j_function(2.0, "exact") == pytest.approx(oracle, abs=2e-3)

    def test_closed_form_tracks_exact(self):
        sigma = np.array([0.3, 1.0, 2.0, 3.5, 5.0, 8.0])
        np.testing.assert_allclose(j_function(sigma), j_function(sigma, "exact"), atol=3e-3)

    def test_strictly_increasing(self):
        sigma = np.linspace(0.0, 10.0, 1001)
        assert np.all(np.diff(j_function(sigma)) > 0)
        wide = j_function(np.linspace(0.0, 20.0, 2001))
        assert np.all(np.diff(wide) >= 0)

    def test_round_trip(self):
        assert j_inverse(j_function(1.7)) == pytest.approx(1.7, abs=1e-5)
        assert j_inverse(j_function(1.7, "exact"), "exact") == pytest.approx(1.7, abs=1e-5)
        sigma = np.linspace(0.05, 10.0, 200)
        np.testing.assert_allclose(j_inverse(j_function(sigma)), sigma, atol=1e-5)

    def test_inverse_then_forward(self):
        i = np.linspace(0.0, 0.999, 100)
        np.testing.assert_allclose(j_function(j_inverse(i)), i, atol=1e-6)

    def test_vectorized_shapes(self):
        out = j_function(np.ones((3, 4)))
        assert out.shape == (3, 4)
        assert isinstance(j_function(1.0), float)

    def test_domain(self):
        with pytest.raises(DomainError):
            j_function(-0.1)
        with pytest.raises(DomainError):
            j_inverse(1.0)
        with pytest.raises(DomainError):
            j_function(1.0, "lookup")


class TestMixtureEntropy:

    def test_single_component(self):
        mix = GaussianMixture.uniform([0.0], 1.0)
        assert mixture_entropy(mix) == pytest.approx(GAUSS_ENTROPY, abs=1e-6)
        wide = GaussianMixture.uniform([3.0], 4.0)
        assert mixture_entropy(wide) == pytest.approx(0.5 * math.log2(2 * math.pi * math.e * 4.0), abs=1e-6)

    def test_separated_components_add_one_bit(self):
        mix = GaussianMixture.uniform([-10.0, 10.0], 1.0)
        assert mixture_entropy(mix) == pytest.approx(1.0 + GAUSS_ENTROPY, abs=1e-3)

    def test_permutation_and_negation(self):
        mix = GaussianMixture([-1.0, 0.2, 1.5], [0.2, 0.5, 0.3], 0.3)
        permuted = GaussianMixture([1.5, -1.0, 0.2], [0.3, 0.2, 0.5], 0.3)
        negated = GaussianMixture([1.0, -0.2, -1.5], [0.2, 0.5, 0.3], 0.3)
        h = mixture_entropy(mix)
        assert mixture_entropy(permuted) == pytest.approx(h, abs=1e-7)
        assert mixture_entropy(negated) == pytest.approx(h, abs=1e-7)

    def test_pdf_integrates_to_one(self):
        mix = GaussianMixture([-2.0, 0.0, 2.0], [0.25, 0.5, 0.25], 0.5)
        nodes, weights = composite_legendre(-12.0, 12.0, 60)
        assert np.sum(weights * mixture_pdf(mix, nodes)) == pytest.approx(1.0, abs=1e-10)
        assert mixture_logpdf(mix, np.zeros((2, 3))).shape == (2, 3)

    def test_invalid_weights(self):
        with pytest.raises(DomainError):
            GaussianMixture([0.0, 1.0], [0.5, 0.6], 1.0)
        with pytest.raises(DomainError):
            GaussianMixture([0.0], [1.0], 0.0)


class TestCompositeLegendre:

    def test_polynomial_exact(self):
        nodes, weights = composite_legendre(0.0, 2.0, 3, order=4)
        assert nodes.size == 12
        assert np.sum(weights * nodes ** 5) == pytest.approx(64.0 / 6.0, rel=1e-12)

    def test_bad_interval(self):
        with pytest.raises(DomainError):
            composite_legendre(1.0, 1.0, 4)


def _vertex_oracle(c, a, b):
    """Best objective over all basic feasible points of {A x <= b, x >= 0}."""
    n = c.size
    rows = np.vstack([a, -np.eye(n)])
    rhs = np.concatenate([b, np.zeros(n)])
    best = -np.inf
    for active in itertools.combinations(range(rows.shape[0]), n):
        sub = rows[list(active)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        x = np.linalg.solve(sub, rhs[list(active)])
        if np.all(rows @ x <= rhs + 1e-9):
            best = max(best, float(c @ x))
    return best


class TestLpSolve:

    def test_matches_vertex_enumeration(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            n = int(rng.integers(2, 7))
            m = int(rng.integers(n, n + 4))
            a = rng.uniform(0.1, 1.0, (m, n))
            b = rng.uniform(0.5, 2.0, m)
            c = rng.uniform(-0.5, 1.0, n)
            result = lp_solve(LinearProgram(c, a_ub=a, b_ub=b))
            assert result.feasible
            assert np.all(a @ result.x <= b + 1e-8)
            assert np.all(result.x >= -1e-9)
            assert result.objective == pytest.approx(_vertex_oracle(c, a, b), abs=1e-7)

    def test_equality_constraint(self):
        lp = LinearProgram([1.0, 2.0], a_ub=[[1.0, 3.0]], b_ub=[2.0], a_eq=[[1.0, 1.0]], b_eq=[1.0])
        result = lp_solve(lp)
        assert result.x == pytest.approx([0.5, 0.5], abs=1e-9)
        assert result.objective == pytest.approx(1.5, abs=1e-9)

    def test_infeasible_verdict(self):
        result = lp_solve(LinearProgram([1.0], a_ub=[[1.0]], b_ub=[-1.0]))
        assert not result.feasible
        assert result.x is None

    def test_unbounded(self):
        with pytest.raises(LpUnboundedError):
            lp_solve(LinearProgram([1.0, 0.0]))

    def test_malformed(self):
        with pytest.raises(DomainError):
            LinearProgram([1.0, 1.0], a_ub=[[1.0]], b_ub=[1.0])


class TestWilsonInterval:

    def test_contains_estimate(self):
        low, high = wilson_interval(30, 1000)
        assert low < 0.03 < high
        assert 0.0 <= low and high <= 1.0

    def test_zero_errors(self):
        low, high = wilson_interval(0, 500)
        assert low == 0.0
        assert 0.0 < high < 0.01

    def test_all_errors(self):
        low, high = wilson_interval(500, 500)
        assert high == 1.0
        assert 0.99 < low < 1.0

    def test_no_trials(self):
        assert wilson_interval(0, 0) == (0.0, 1.0)
