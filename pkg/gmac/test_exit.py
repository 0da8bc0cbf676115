# gmac/test_exit.py
"""
Tests for the EXIT transfer functions, the state-node integrals and the
joint two-user trajectory.
"""
import csv
import math
import os
import sys

import numpy as np
import pytest

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from gmac.errors import DomainError
from gmac.models import DegreeDistribution
from gmac.numerics import (
    GaussianMixture, j_function, j_inverse, mixture_entropy, mixture_logpdf, mixture_pdf,
)
from gmac.constellation import named_constellation, per_level_capacities, snr_to_noise_var
from gmac.exit import (
    LevelChannelContext, coupling_mean, decoding_threshold, exit_chart_curves, exit_cv, exit_sv,
    exit_vc, exit_vs, f_information, f_means, inverse_cv, joint_trajectory, state_profile, sv_curve,
    write_trace_csv,
)
from gmac.codedesign import reference_bundle

MC10_U1L1 = DegreeDistribution(lambdas={2: 0.3609, 3: 0.4311, 34: 0.1771, 35: 0.0309}, d_c=6)

REFERENCE_PAIRS = [(name, level) for name in ("MC-10", "MC-18", "OPT-18") for level in (1, 2)]


@pytest.fixture(scope="module")
def mc10_level1():
    c1, c2 = named_constellation("MC")
    return LevelChannelContext(c1, c2, 1, snr_to_noise_var(10.0))


def _mc_state_llr(ctx, target_user, b_other, m, samples=400_000, seed=11):
    """Sample (y, vs) given own bit 0 and return the state-to-variable LLRs."""
    rng = np.random.default_rng(seed)
    atoms = ctx.user_atoms(target_user)[0]
    std = math.sqrt(ctx.noise_var)
    y = rng.choice(atoms[0, b_other], samples) + rng.normal(0.0, std, samples)
    sign = 1.0 if b_other == 0 else -1.0
    vs = rng.normal(sign * m, math.sqrt(2.0 * m), samples)

    def likelihood(values):
        return np.mean(np.exp(-(y[:, None] - values[None, :]) ** 2 / (2.0 * ctx.noise_var)), axis=1)

    w0 = 1.0 / (1.0 + np.exp(-vs))
    num = likelihood(atoms[0, 0]) * w0 + likelihood(atoms[0, 1]) * (1.0 - w0)
    den = likelihood(atoms[1, 0]) * w0 + likelihood(atoms[1, 1]) * (1.0 - w0)
    return np.log(num / den)


def _mc_f_mean(ctx, target_user, b_other, m):
    return float(np.mean(_mc_state_llr(ctx, target_user, b_other, m)))


def _mc_f_information(ctx, target_user, b_other, m):
    f = _mc_state_llr(ctx, target_user, b_other, m)
    return 1.0 - float(np.mean(np.logaddexp(0.0, -f))) / math.log(2.0)


class TestTransferFunctions:

    def test_vc_matches_exact_oracle(self):
        dd = DegreeDistribution(lambdas={2: 0.5, 3: 0.5}, d_c=6)
        s_cv, s_sv = j_inverse(0.5, "exact"), j_inverse(0.3, "exact")
        oracle = sum(0.5 * j_function(math.sqrt((j - 1) * s_cv ** 2 + s_sv ** 2), "exact") for j in (2, 3))
        assert exit_vc(dd, 0.5, 0.3) == pytest.approx(oracle, abs=2e-3)

    def test_vs_term_by_term(self):
        s = j_inverse(0.8)
        weights = {j: lam / j for j, lam in MC10_U1L1.lambdas.items()}
        total = sum(weights.values())
        oracle = sum(w / total * j_function(math.sqrt(j) * s) for j, w in weights.items())
        assert exit_vs(MC10_U1L1, 0.8) == pytest.approx(oracle, abs=1e-6)

    def test_cv_against_check_node_sampling(self):
        d_c, i_vc = 6, 0.9
        sigma = j_inverse(i_vc)
        rng = np.random.default_rng(5)
        llr = rng.normal(sigma ** 2 / 2.0, sigma, (200_000, d_c - 1))
        product = np.clip(np.prod(np.tanh(llr / 2.0), axis=1), -1 + 1e-15, 1 - 1e-15)
        out = 2.0 * np.arctanh(product)
        oracle = 1.0 - np.mean(np.logaddexp(0.0, -out)) / math.log(2.0)
        assert exit_cv(d_c, i_vc) == pytest.approx(oracle, abs=0.02)

    def test_inverse_cv_round_trip(self):
        grid = np.linspace(0.05, 0.95, 19)
        np.testing.assert_allclose(inverse_cv(8, exit_cv(8, grid)), grid, atol=1e-6)

    def test_boundaries(self):
        assert exit_vc(MC10_U1L1, 0.0, 0.0) == pytest.approx(0.0, abs=1e-12)
        assert coupling_mean(0.0) == 0.0
        assert coupling_mean(0.5) == pytest.approx(0.5 * j_inverse(0.5) ** 2)
        with pytest.raises(DomainError):
            exit_cv(1, 0.5)

    def test_chart_curves(self):
        curves = exit_chart_curves(MC10_U1L1, np.linspace(0.0, 0.9, 10), i_sv=0.4)
        assert curves["vc"].shape == (10,)
        assert np.all(np.diff(curves["vc"]) > 0)
        assert np.all(np.diff(curves["cv_inverse"]) > 0)


class TestChannelContext:

    def test_validation(self):
        c1, c2 = named_constellation("MC")
        with pytest.raises(DomainError):
            LevelChannelContext(c1, c2, 3, 0.1)
        with pytest.raises(DomainError):
            LevelChannelContext(c1, c2, 1, 0.0)
        with pytest.raises(DomainError):
            LevelChannelContext(c1, c2, 1, 0.1, order=(1, 1))

    def test_known_levels(self):
        c1, c2 = named_constellation("OPT")
        ctx = LevelChannelContext(c1, c2, 1, 0.05, order=(2, 1))
        assert ctx.known_levels == (2,)
        assert ctx.realizations == 4


class TestStateNode:

    def test_f_mean_against_sampling(self, mc10_level1):
        quad = f_means(mc10_level1, 1, 0, 2.0)
        assert quad == pytest.approx(_mc_f_mean(mc10_level1, 1, 0, 2.0), rel=0.01)

    @pytest.mark.parametrize("target_user,b_other,m", [(1, 1, 0.5), (2, 0, 4.0), (2, 1, 0.0)])
    def test_f_mean_off_axis_points(self, target_user, b_other, m):
        c1, c2 = named_constellation("OPT")
        ctx = LevelChannelContext(c1, c2, 1, snr_to_noise_var(14.0))
        quad = f_means(ctx, target_user, b_other, m)
        oracle = _mc_f_mean(ctx, target_user, b_other, m)
        assert quad == pytest.approx(oracle, rel=0.01, abs=1e-3)

    def test_known_partner_bit_limit(self, mc10_level1):
        """A near-certain partner leaves the interference-cancelled LLR mean, a KL divergence."""
        ctx = mc10_level1
        atoms = ctx.user_atoms(1)[0]
        y = np.linspace(-10.0, 10.0, 40001)
        for b_other in (0, 1):
            p0 = GaussianMixture.uniform(atoms[0, b_other], ctx.noise_var)
            p1 = GaussianMixture.uniform(atoms[1, b_other], ctx.noise_var)
            integrand = mixture_pdf(p0, y) * (mixture_logpdf(p0, y) - mixture_logpdf(p1, y))
            oracle = np.trapz(integrand, y)
            assert f_means(ctx, 1, b_other, 1e4) == pytest.approx(oracle, rel=1e-3)

    def test_symmetric_users(self, mc10_level1):
        for m in (0.0, 1.5):
            assert exit_sv(mc10_level1, 1, m) == pytest.approx(exit_sv(mc10_level1, 2, m), abs=1e-9)

    def test_curve_is_monotone_and_cached(self, mc10_level1):
        grid, values = sv_curve(mc10_level1, 1)
        assert np.all(np.diff(values) >= 0)
        assert values[0] > 0.0
        assert sv_curve(mc10_level1, 1)[1] is values

    def test_negative_mean(self, mc10_level1):
        with pytest.raises(DomainError):
            f_means(mc10_level1, 1, 0, -1.0)

    def test_unknown_model(self):
        c1, c2 = named_constellation("MC")
        with pytest.raises(DomainError):
            LevelChannelContext(c1, c2, 1, 0.1, sv_model="gaussian")

    @pytest.mark.parametrize("target_user,b_other,m", [(1, 0, 0.0), (1, 1, 2.0), (2, 0, 6.0)])
    def test_f_information_against_sampling(self, mc10_level1, target_user, b_other, m):
        quad = f_information(mc10_level1, target_user, b_other, m)
        assert quad == pytest.approx(_mc_f_information(mc10_level1, target_user, b_other, m), abs=5e-3)

    def test_no_partner_information_is_single_user_rate(self, mc10_level1):
        """With no partner message I_SV is I(U; Y) with the partner's bit unknown."""
        ctx = mc10_level1
        atoms = ctx.user_atoms(1)[0]

        def entropy(values):
            return mixture_entropy(GaussianMixture.uniform(np.ravel(values), ctx.noise_var))

        oracle = entropy(atoms) - 0.5 * (entropy(atoms[0]) + entropy(atoms[1]))
        assert exit_sv(ctx, 1, 0.0) == pytest.approx(oracle, abs=1e-4)

    @pytest.mark.parametrize("name,level", [("MC", 1), ("MC", 2), ("OPT", 1)])
    def test_chain_rule_recovers_level_capacity(self, name, level):
        c1, c2 = named_constellation(name)
        noise_var = snr_to_noise_var(10.0)
        ctx = LevelChannelContext(c1, c2, level, noise_var)
        capacity = per_level_capacities(c1, c2, noise_var)[level - 1]
        assert exit_sv(ctx, 1, 0.0) + exit_sv(ctx, 2, 1e4) == pytest.approx(capacity, abs=2e-3)

    def test_mean_model_formula(self):
        c1, c2 = named_constellation("MC")
        ctx = LevelChannelContext(c1, c2, 1, snr_to_noise_var(10.0), sv_model="mean")
        m = 3.0
        oracle = sum(0.5 * j_function(math.sqrt(2.0 * max(0.0, f_means(ctx, 1, b, m)))) for b in (0, 1))
        assert exit_sv(ctx, 1, m) == pytest.approx(oracle, abs=1e-12)


class TestTrajectory:

    def test_cycle_code_converges(self, mc10_level1):
        dd = DegreeDistribution.regular(2, 2)
        converged, trace = joint_trajectory(mc10_level1, dd, dd)
        assert converged
        assert trace[-1].i_vc[0] >= 1.0 - 1e-4

    def test_symmetric_states(self, mc10_level1):
        result = joint_trajectory(mc10_level1, MC10_U1L1, MC10_U1L1)
        for state in result.trace:
            assert state.i_vc[0] == pytest.approx(state.i_vc[1], abs=1e-9)
            assert state.i_sv[0] == pytest.approx(state.i_sv[1], abs=1e-9)

    def test_high_rate_code_stalls(self):
        c1, c2 = named_constellation("MC")
        ctx = LevelChannelContext(c1, c2, 1, snr_to_noise_var(0.0))
        dd = DegreeDistribution.regular(3, 30)
        result = joint_trajectory(ctx, dd, dd)
        assert not result.converged
        assert result.final.i_vc[0] < 0.9

    def test_state_profile(self, mc10_level1):
        result = joint_trajectory(mc10_level1, MC10_U1L1, MC10_U1L1)
        icv, isv = state_profile(result.trace, 1)
        assert icv.size == isv.size == len(result.trace)
        assert icv[0] == 0.0
        assert np.all(np.diff(icv) >= 0) and np.all(np.diff(isv) >= 0)

    def test_trace_csv(self, mc10_level1, tmp_path):
        result = joint_trajectory(mc10_level1, MC10_U1L1, MC10_U1L1)
        path = write_trace_csv(result.trace, str(tmp_path / "trace.csv"))
        with open(path, newline="") as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 2 * len(result.trace)
        assert set(rows[0]) == {"iteration", "user", "I_CV", "I_VC", "I_VS", "I_SV"}

    def test_state_output_uses_fresh_check_information(self, mc10_level1):
        result = joint_trajectory(mc10_level1, MC10_U1L1, MC10_U1L1)
        for state in result.trace:
            for k in (0, 1):
                assert state.i_cv[k] == pytest.approx(exit_cv(6, state.i_vc[k]), abs=1e-12)
                assert state.i_vs[k] == pytest.approx(exit_vs(MC10_U1L1, state.i_cv[k]), abs=1e-12)

    def test_threshold_brackets(self):
        c1, c2 = named_constellation("MC")
        dd = DegreeDistribution.regular(3, 4)
        threshold = decoding_threshold(c1, c2, 1, dd, dd, -5.0, 20.0, tol_db=1.0)
        assert -5.0 < threshold <= 20.0
        ctx = LevelChannelContext.at_snr(c1, c2, 1, threshold)
        assert joint_trajectory(ctx, dd, dd).converged


def _reference_level(name, level, offset_db=0.0):
    bundle = reference_bundle(name)
    c1, c2 = named_constellation(bundle.constellation)
    ctx = LevelChannelContext.at_snr(c1, c2, level, bundle.dsnr_db + offset_db, order=bundle.order)
    pair = (bundle.code(1, level).distribution(), bundle.code(2, level).distribution())
    return bundle, ctx, pair


@pytest.mark.slow
class TestReferenceDesigns:

    @pytest.mark.parametrize("name,level", REFERENCE_PAIRS)
    def test_open_at_design_snr(self, name, level):
        _, ctx, pair = _reference_level(name, level)
        result = joint_trajectory(ctx, *pair)
        assert result.converged, f"{name} level {level} stalls at I_VC {result.final.i_vc}"

    @pytest.mark.parametrize("name,level", REFERENCE_PAIRS)
    def test_closed_below_design_snr(self, name, level):
        bundle, ctx, pair = _reference_level(name, level, -3.0)
        capacity = per_level_capacities(ctx.c1, ctx.c2, ctx.noise_var, bundle.order)[bundle.order.index(level)]
        rate = sum(dd.design_rate() for dd in pair)
        if rate <= capacity + 0.02:
            pytest.skip(f"level capacity {capacity:.4f} 3 dB below design still covers the sum rate {rate:.4f}")
        assert not joint_trajectory(ctx, *pair).converged

    def test_threshold_grows_with_rate(self):
        c1, c2 = named_constellation("MC")
        low, high = DegreeDistribution.regular(3, 4), DegreeDistribution.regular(3, 5)
        t_low = decoding_threshold(c1, c2, 1, low, low, -5.0, 20.0, tol_db=0.1)
        t_high = decoding_threshold(c1, c2, 1, high, high, -5.0, 20.0, tol_db=0.1)
        assert t_low < t_high
