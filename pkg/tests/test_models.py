import math

import numpy as np
import pytest

from levyspec.models import (
    GH,
    STABLE,
    STABLE_DIFF,
    GridError,
    ModelError,
    ModelSpec,
    NotContinuableError,
    _bessel_k_panels,
    _bessel_tmax,
    auto_grid,
    bessel_k,
    cf_at,
    char_exponent,
    char_exponent_cont,
    density_on_grid,
    log_bessel_k,
    risk_neutralize,
    sample_increments,
    true_fractional_order,
)

from conftest import assert_close


def bessel_k_oracle(order, z):
    """Independent refined quadrature: same integral, 10x the panel count of
    the adaptive routine's final refinement, without the adaptive logic."""
    tmax = _bessel_tmax(abs(order), float(np.real(z)))
    val = _bessel_k_panels(abs(order), np.asarray(z, dtype=complex), 640, tmax)
    return complex(np.exp(-z) * val)


class TestBesselK:
    def test_half_integer_closed_form(self):
        for z in (0.3, 1.0, 7.5, 40.0):
            exact = math.sqrt(math.pi / (2 * z)) * math.exp(-z)
            assert_close(bessel_k(0.5, z), exact, 1e-12 * exact, "K_{1/2}")

    def test_order_symmetry(self):
        for nu in (0.3, 1.0, 2.7):
            a = bessel_k(nu, 1.5 + 0.5j)
            b = bessel_k(-nu, 1.5 + 0.5j)
            assert a == b

    def test_against_refined_quadrature(self):
        for nu, z in [(1.0, 1.0), (1.0, 0.1), (2.5, 5.0 - 3.0j),
                      (0.0, 0.1 + 2.0j), (5.0, 50.0), (1.5, 0.3 + 0.1j)]:
            ref = bessel_k_oracle(nu, z)
            assert abs(bessel_k(nu, z) - ref) <= 1e-10 * abs(ref)

    def test_domain_error(self):
        with pytest.raises(ModelError):
            bessel_k(1.0, -1.0)
        with pytest.raises(ModelError):
            bessel_k(1.0, -0.5 + 2j)

    def test_log_form_matches(self):
        for z in (0.5, 3.0 + 1.0j, 200.0):
            k = bessel_k(1.2, z)
            assert abs(np.exp(log_bessel_k(1.2, z)) - k) <= 1e-11 * abs(k)

    def test_log_form_survives_underflow(self):
        lk = log_bessel_k(1.0, 2000.0)
        assert np.isfinite(lk.real) and lk.real < -1999


class TestCharExponent:
    def test_stable_direct(self):
        m = ModelSpec(family=STABLE, eta=1.0, alpha=1.0)
        assert_close(char_exponent(m, 2.0), -2.0, 1e-14, "stable psi(2)")

    def test_zero_frequency(self, gh_sim, gh_market, stable_15, stable_diff):
        for m in (gh_sim, gh_market, stable_15, stable_diff):
            assert abs(char_exponent(m, 0.0)) < 1e-13

    def test_gh_vs_bessel_oracle(self):
        m = ModelSpec(family=GH, kappa=1.0, beta=0.0, delta=1.0, lam=1.0)
        u = 1.0
        zeta0 = math.sqrt(m.kappa**2 - m.beta**2)
        zeta = complex(np.sqrt(m.kappa**2 - (m.beta + 1j * u) ** 2))
        ref = (m.lam * (np.log(zeta0) - np.log(zeta))
               + np.log(bessel_k_oracle(m.lam, m.delta * zeta))
               - np.log(bessel_k_oracle(m.lam, m.delta * zeta0).real))
        assert_close(char_exponent(m, u), ref, 1e-10, "GH psi vs oracle")

    def test_real_part_nonpositive(self, gh_sim, gh_market, stable_15, stable_diff):
        u = np.linspace(-30, 30, 301)
        for m in (gh_sim, gh_market, stable_15, stable_diff):
            assert np.all(np.real(char_exponent(m, u)) <= 1e-12)

    def test_diffusion_term(self):
        a = ModelSpec(family=STABLE_DIFF, eta=1.0, alpha=1.0, a=0.5)
        b = ModelSpec(family=STABLE, eta=1.0, alpha=1.0)
        u = 3.0
        assert_close(char_exponent(a, u) - char_exponent(b, u),
                     -0.5 * 0.25 * 9.0, 1e-13, "diffusion part")


class TestCfAt:
    def test_gaussian_case(self):
        m = ModelSpec(family=STABLE, eta=1.0, alpha=2.0)
        assert_close(cf_at(m, 1.0, 1.0), math.exp(-1.0), 1e-14, "gaussian cf")

    def test_unit_at_zero(self, gh_sim, gh_market, stable_15):
        for m in (gh_sim, gh_market, stable_15):
            assert_close(cf_at(m, 0.7, 0.0), 1.0, 1e-13, "cf(0)")

    def test_gh_quarter_time(self, gh_sim):
        u = 3.0
        full = cf_at(gh_sim, 1.0, u)
        quarter = cf_at(gh_sim, 0.25, u)
        assert_close(quarter, full ** 0.25, 1e-12, "cf time scaling")

    def test_modulus_bounded(self, gh_sim, gh_market, stable_15, stable_diff):
        u = np.linspace(-25, 25, 501)
        for m in (gh_sim, gh_market, stable_15, stable_diff):
            assert np.max(np.abs(cf_at(m, 1.0, u))) <= 1.0 + 1e-12

    def test_symmetric_models_real_even(self, gh_sim, stable_15):
        u = np.linspace(0.1, 12, 77)
        for m in (gh_sim, stable_15):
            plus = cf_at(m, 1.0, u)
            minus = cf_at(m, 1.0, -u)
            assert np.max(np.abs(np.imag(plus))) < 1e-12
            assert_close(plus, minus, 1e-13, "evenness")

    def test_time_doubling(self, gh_market, stable_diff):
        u = np.linspace(-8, 8, 41)
        for m in (gh_market, stable_diff):
            assert_close(cf_at(m, 2.0, u), cf_at(m, 1.0, u) ** 2, 1e-12,
                         "cf(2t) = cf(t)^2")


class TestRiskNeutralize:
    def test_fixed_point(self):
        # pure diffusion already neutral
        m = ModelSpec(family=STABLE_DIFF, eta=1e-12, alpha=2.0, a=0.3,
                      mu=-(1e-12) - 0.5 * 0.09)
        out = risk_neutralize(m)
        assert abs(out.mu - m.mu) < 1e-12

    def test_pure_diffusion_drift(self):
        m = ModelSpec(family=STABLE_DIFF, eta=1e-300, alpha=2.0, a=0.4, mu=1.23)
        out = risk_neutralize(m)
        assert_close(out.mu, -0.5 * 0.16, 1e-12, "mu = -a^2/2")

    def test_gh_market_model(self, gh_market):
        out = risk_neutralize(gh_market)
        # E e^{Y_t} = phi(-i) = 1 via the continued exponent
        for t in (0.25, 1.0):
            val = np.exp(t * char_exponent_cont(out, -1j))
            assert_close(val, 1.0, 1e-11, "phi(-i)")
        assert out.family == gh_market.family
        assert out.kappa == gh_market.kappa

    def test_stable_not_continuable(self, stable_15):
        with pytest.raises(NotContinuableError):
            risk_neutralize(stable_15)

    def test_gh_beta_domain(self):
        bad = ModelSpec(family=GH, kappa=1.0, beta=0.5, delta=1.0, lam=1.0)
        with pytest.raises(NotContinuableError):
            risk_neutralize(bad)  # kappa <= |beta + 1|


class TestDensityAndSampling:
    def test_gaussian_density(self):
        m = ModelSpec(family=STABLE, eta=0.5, alpha=2.0)  # var = 2*eta*t = t
        x = auto_grid(m, 1.0)
        p = density_on_grid(m, 1.0, x)
        ref = np.exp(-x**2 / 2) / math.sqrt(2 * math.pi)
        assert np.max(np.abs(p - ref)) < 1e-7

    def test_degenerate_drift_rejected(self):
        m = ModelSpec(family=STABLE, eta=1e-300, alpha=2.0, mu=1.0)
        with pytest.raises(GridError):
            auto_grid(m, 1.0)

    def test_too_narrow_grid_rejected(self, stable_15):
        x = np.linspace(-3, 3, 4096)
        with pytest.raises(GridError):
            density_on_grid(stable_15, 1.0, x)

    def test_gh_normalization(self, gh_sim):
        x = auto_grid(gh_sim, 1.0)
        p = density_on_grid(gh_sim, 1.0, x)
        assert abs(np.trapezoid(p, x) - 1.0) < 1e-6
        assert p.min() >= 0

    def test_sampling_determinism(self, stable_15):
        a = sample_increments(stable_15, 1.0, 1000, seed=42)
        b = sample_increments(stable_15, 1.0, 1000, seed=42)
        assert np.array_equal(a.values, b.values)
        c = sample_increments(stable_15, 1.0, 1000, seed=43)
        assert not np.array_equal(a.values, c.values)

    def test_sampling_rejects_empty(self, stable_15):
        with pytest.raises(ModelError):
            sample_increments(stable_15, 1.0, 0, seed=1)

    def test_sample_mean_matches_exponent_derivative(self, gh_market):
        # E X_dt = dt * Im psi'(0), via a numerical derivative of the exponent
        dt = 1.0
        h = 1e-5
        mean_exact = dt * float(np.imag(char_exponent(gh_market, h))) / h
        s = sample_increments(gh_market, dt, 10**6, seed=5)
        se = s.values.std() / math.sqrt(s.n)
        assert abs(s.values.mean() - mean_exact) < 4 * se

    @pytest.mark.parametrize("family_fixture", ["stable_15", "stable_10", "gh_sim"])
    def test_empirical_cf_consistency(self, family_fixture, request):
        # sampled increments reproduce the cf within 4*sqrt((1-|phi|^2)/n)
        m = request.getfixturevalue(family_fixture)
        n = 10**5
        s = sample_increments(m, 1.0, n, seed=17)
        for u in np.linspace(0.25, 10.0, 14):
            emp = np.mean(np.exp(1j * u * s.values))
            ex = complex(cf_at(m, 1.0, u))
            bound = 4 * math.sqrt((1 - abs(ex) ** 2) / n) + 4 / math.sqrt(n)
            assert abs(emp - ex) < bound, f"u={u}: {abs(emp - ex):.4f} > {bound:.4f}"


class TestTrueOrder:
    def test_values(self, gh_sim, stable_diff):
        assert true_fractional_order(ModelSpec(family=STABLE, eta=2.0, alpha=0.7)) == 0.7
        assert true_fractional_order(gh_sim) == 1.0
        assert true_fractional_order(
            ModelSpec(family=STABLE_DIFF, eta=1.0, alpha=1.5, a=0.2)) == 1.5


class TestModelSpecValidation:
    def test_family_checked(self):
        with pytest.raises(ModelError):
            ModelSpec(family="Tempered", eta=1.0, alpha=1.0)

    def test_stable_domain(self):
        with pytest.raises(ModelError):
            ModelSpec(family=STABLE, eta=1.0, alpha=2.5)
        with pytest.raises(ModelError):
            ModelSpec(family=STABLE, eta=-1.0, alpha=1.0)
        with pytest.raises(ModelError):
            ModelSpec(family=STABLE, eta=1.0, alpha=1.0, a=0.1)

    def test_gh_domain(self):
        with pytest.raises(ModelError):
            ModelSpec(family=GH, kappa=1.0, beta=1.5, delta=1.0, lam=1.0)
        with pytest.raises(ModelError):
            ModelSpec(family=GH, kappa=0.0, beta=0.0, delta=1.0, lam=1.0)
        # diffusion is allowed on GH (mixed jump-diffusion experiments)
        ModelSpec(family=GH, kappa=1.0, beta=0.0, delta=4.0, lam=1.0, a=0.1)

    def test_cross_family_fields(self):
        with pytest.raises(ModelError):
            ModelSpec(family=STABLE, eta=1.0, alpha=1.0, kappa=1.0)
