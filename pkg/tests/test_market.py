import math

import numpy as np
import pytest

from levyspec.market import (
    MarketConfig,
    MartingaleError,
    OptionQuoteSet,
    exp_weight,
    parity_split,
    price_OT,
    synthesize_quotes,
    unweight,
    _phi_T_shifted,
)
from levyspec.models import GH, STABLE_DIFF, ModelSpec, risk_neutralize

from conftest import assert_close, payoff_quadrature_oracle


@pytest.fixture(scope="module")
def gh_q(gh_market):
    return risk_neutralize(gh_market)


class TestPriceOT:
    def test_gaussian_closed_form(self):
        from levyspec.market import _bs_O
        mq = risk_neutralize(ModelSpec(family=STABLE_DIFF, eta=1e-300, alpha=2.0, a=0.8))
        y = np.linspace(-1.5, 1.5, 101)
        o = price_OT(mq, 0.25, y)
        ref = _bs_O(y, 0.8 * math.sqrt(0.25))
        rel = np.abs(o - ref) / np.maximum(ref, 1e-12)
        assert rel[ref > 1e-8].max() < 5e-6

    def test_payoff_quadrature(self, gh_q):
        y = np.linspace(-1.0, 1.0, 21)
        o = price_OT(gh_q, 0.25, y)
        ref = payoff_quadrature_oracle(gh_q, 0.25, y)
        assert np.max(np.abs(o - ref) / ref) < 1e-5

    def test_tails_vanish(self, gh_q):
        o = price_OT(gh_q, 0.25, np.array([-12.0, 12.0]))
        assert np.all(o < 1e-6)

    def test_martingale_guard(self, gh_market):
        with pytest.raises(MartingaleError):
            price_OT(gh_market, 0.25, np.array([0.0]))  # not risk-neutralized

    def test_nonnegative(self, gh_q):
        y = np.linspace(-6, 6, 401)
        assert price_OT(gh_q, 0.25, y).min() >= 0.0

    def test_fourier_identity(self, gh_q):
        # recompute the forward transform of the priced curve and compare
        # against (1 - phi_T(v-i)) / (v(v-i)) on |v| <= 50
        y = np.linspace(-14.0, 14.0, 2**16 + 1)
        o = price_OT(gh_q, 0.25, y)
        vs = np.linspace(-50, 50, 41)
        vs = vs[np.abs(vs) > 1e-9]
        worst = 0.0
        for v in vs:
            num = np.trapezoid(np.exp(1j * v * y) * o, y)
            phi = complex(_phi_T_shifted(gh_q, 0.25, np.array([v]))[0])
            ana = (1 - phi) / (v * (v - 1j))
            worst = max(worst, abs(num - ana))
        assert worst < 1e-5


class TestParity:
    def test_at_the_money(self, gh_q):
        o = price_OT(gh_q, 0.25, np.array([0.0]))
        call, put = parity_split(o, np.array([0.0]))
        assert call[0] == put[0]

    def test_parity_arithmetic(self):
        call, put = parity_split(np.array([0.0]), np.array([-1.0]))
        assert_close(call[0], 1 - math.exp(-1.0), 1e-15, "call from zero put")

    def test_residual_and_positivity(self, gh_q):
        y = np.linspace(-3, 3, 301)
        o = price_OT(gh_q, 0.25, y)
        call, put = parity_split(o, y)
        resid = call - put - (1 - np.exp(y))
        assert np.abs(resid).max() <= 1e-10
        assert call.min() >= -1e-8 and put.min() >= -1e-8


class TestSynthesizeQuotes:
    def test_zero_noise(self, gh_q):
        cfg = MarketConfig(n_quotes=50, sigma_bar=0.0, seed=1)
        q = synthesize_quotes(cfg, gh_q)
        assert np.array_equal(q.noisy, q.clean)

    def test_determinism(self, gh_q):
        cfg = MarketConfig(n_quotes=100, sigma_bar=10.0, seed=7)
        a = synthesize_quotes(cfg, gh_q)
        b = synthesize_quotes(cfg, gh_q)
        assert a.to_csv() == b.to_csv()

    def test_standardized_residuals(self, gh_q):
        n = 1000
        cfg = MarketConfig(n_quotes=n, sigma_bar=10.0, seed=11)
        q = synthesize_quotes(cfg, gh_q)
        z = (q.noisy - q.clean) / q.sigma
        assert abs(z.mean()) < 4 / math.sqrt(n)
        assert abs(z.var() - 1) < 4 * math.sqrt(2 / n)

    def test_noise_forms(self, gh_q):
        sq = synthesize_quotes(MarketConfig(n_quotes=50, sigma_bar=2.0, seed=3), gh_q)
        pr = synthesize_quotes(
            MarketConfig(n_quotes=50, sigma_bar=2.0, seed=3, noise_form="proportional"), gh_q)
        assert_close(sq.sigma, (2.0 * sq.clean) ** 2, 1e-14, "squared form")
        assert_close(pr.sigma, 2.0 * pr.clean, 1e-14, "proportional form")

    def test_design_statistics(self, gh_q):
        cfg = MarketConfig(n_quotes=4000, sigma_bar=1.0, seed=5)
        q = synthesize_quotes(cfg, gh_q)
        assert abs(q.y.mean()) < 4 * math.sqrt(1 / 3 / 4000)
        assert abs(q.y.var() - 1 / 3) < 4 * math.sqrt(2 / 3 / 4000)
        assert np.all(np.diff(q.y) > 0)
        assert q.deltas.shape == q.y.shape

    def test_noise_level_positive_reproducible(self, gh_q):
        cfg = MarketConfig(n_quotes=200, sigma_bar=20.0, seed=2)
        a = synthesize_quotes(cfg, gh_q).noise_level()
        b = synthesize_quotes(cfg, gh_q).noise_level()
        assert a == b > 0


class TestExpWeight:
    def test_zero_row_unchanged(self):
        q = OptionQuoteSet(y=np.array([0.0, 1.0]), clean=np.array([0.2, math.e]),
                           noisy=np.array([0.25, math.e]), sigma=np.array([0.1, 0.1]),
                           deltas=np.array([0.5, 1.0]), y0=-0.5, seed=0)
        w = exp_weight(q)
        assert w.clean[0] == 0.2
        assert_close(w.clean[1], 1.0, 1e-15, "e * e^{-1}")

    def test_round_trip(self, gh_q):
        q = synthesize_quotes(MarketConfig(n_quotes=64, sigma_bar=5.0, seed=9), gh_q)
        back = unweight(exp_weight(q))
        for a, b in ((back.clean, q.clean), (back.noisy, q.noisy), (back.sigma, q.sigma)):
            assert np.max(np.abs(a - b)) < 1e-14

    def test_double_weighting_rejected(self, gh_q):
        q = synthesize_quotes(MarketConfig(n_quotes=16, sigma_bar=1.0, seed=4), gh_q)
        with pytest.raises(ValueError):
            exp_weight(exp_weight(q))

    def test_noise_level_uses_weighted_sigma(self, gh_q):
        q = synthesize_quotes(MarketConfig(n_quotes=64, sigma_bar=5.0, seed=13), gh_q)
        assert q.noise_level() == pytest.approx(exp_weight(q).noise_level(), rel=1e-12)


class TestQuoteCsv:
    def test_round_trip(self, gh_q):
        q = synthesize_quotes(MarketConfig(n_quotes=32, sigma_bar=10.0, seed=21), gh_q)
        back = OptionQuoteSet.from_csv(q.to_csv())
        assert np.array_equal(back.y, q.y)
        assert np.array_equal(back.noisy, q.noisy)
        assert back.y0 == q.y0
        assert back.seed == q.seed
        assert back.weighted == q.weighted
