import numpy as np
import pytest

from levyspec.ecf import (
    CFEstimate,
    CFGridError,
    cov_kernel_S,
    ecf_on_multiples,
    empirical_cf,
    finite_n_cov,
    mean_delta,
)
from levyspec.models import IncrementSample, cf_at, sample_increments

from conftest import assert_close


def make_estimate(model, t, grid, eps=1e-4, tag="P"):
    return CFEstimate(grid=grid, values=cf_at(model, t, grid), eps=eps, measure_tag=tag)


class TestEmpiricalCF:
    def test_all_zero_increments(self):
        s = IncrementSample(dt=1.0, values=np.zeros(50), seed=0)
        est = empirical_cf(s, np.linspace(0, 5, 11))
        assert_close(est.values, 1.0, 1e-15, "phi~ of zeros")
        assert est.eps == 1.0 / 50

    def test_two_point_symmetry(self):
        s = IncrementSample(dt=1.0, values=np.array([1.0, -1.0]), seed=0)
        est = empirical_cf(s, np.array([0.0, np.pi / 2]))
        assert abs(est.values[1]) < 1e-15  # cos(pi/2)

    def test_monte_carlo_vs_exact(self, stable_10):
        s = sample_increments(stable_10, 1.0, 10**4, seed=2)
        est = empirical_cf(s, np.array([0.5, 1.0]))
        assert abs(est.values[1] - np.exp(-1.0)) < 4 / np.sqrt(10**4)

    def test_modulus_bounded(self, stable_15):
        s = sample_increments(stable_15, 1.0, 500, seed=9)
        est = empirical_cf(s, np.linspace(0, 20, 257))
        assert np.max(np.abs(est.values)) <= 1 + 1e-12
        assert abs(est.values[0]) == pytest.approx(1.0, abs=1e-14)

    def test_hermitian_symmetry(self, stable_15):
        s = sample_increments(stable_15, 1.0, 300, seed=4)
        g = np.linspace(0.1, 4, 21)
        plus = empirical_cf(s, g).values
        minus = np.array([np.mean(np.exp(1j * (-u) * s.values)) for u in g])
        assert_close(minus, np.conj(plus), 1e-13, "phi~(-u) = conj phi~(u)")

    def test_power_path_matches_direct(self, stable_15):
        s = sample_increments(stable_15, 1.0, 4096, seed=10)
        h, m = 0.173, 40
        fast = ecf_on_multiples(s.values, h, m)
        direct = empirical_cf(s, h * np.arange(m + 1) + 0.0).values
        # grid constructor needs strictly increasing > handled: u=0 first node
        assert_close(fast, direct, 5e-12, "power recursion vs direct")


class TestMeanDelta:
    def test_zero_at_origin(self, stable_15):
        assert mean_delta(stable_15, 1.0, 0.0, 0.01) == 0.0

    def test_far_field_limit(self, stable_15):
        assert mean_delta(stable_15, 1.0, 200.0, 0.01) == pytest.approx(0.01, abs=1e-12)

    def test_formula(self, stable_10):
        want = 0.01 * (1 - np.exp(-2.0))
        assert mean_delta(stable_10, 1.0, 1.0, 0.01) == pytest.approx(want, abs=1e-14)

    def test_mc_mean_of_delta(self, stable_15):
        # sample mean of Delta(u) over replications matches eps(1-|phi|^2)
        n, reps = 400, 5000
        u = 1.3
        rng_seeds = range(reps)
        exact = abs(complex(cf_at(stable_15, 1.0, u))) ** 2
        deltas = np.empty(reps)
        for i in rng_seeds:
            s = sample_increments(stable_15, 1.0, n, seed=100 + i)
            deltas[i] = abs(np.mean(np.exp(1j * u * s.values))) ** 2 - exact
        want = mean_delta(stable_15, 1.0, u, 1.0 / n)
        se = deltas.std() / np.sqrt(reps)
        assert abs(deltas.mean() - want) < 4 * se


class TestCovKernel:
    def test_zero_at_origin(self, stable_15):
        f = lambda u: cf_at(stable_15, 1.0, u)
        assert cov_kernel_S(f, 0.0, 0.0) == pytest.approx(0.0, abs=1e-14)

    def test_printed_diagonal_symmetric_model(self, stable_15):
        f = lambda u: cf_at(stable_15, 1.0, u)
        u = 1.2
        want = 1 - abs(complex(cf_at(stable_15, 1.0, u))) ** 2
        assert cov_kernel_S(f, u, u, form="printed") == pytest.approx(want, abs=1e-13)

    def test_symmetry_in_arguments(self, stable_15, gh_market):
        for m in (stable_15, gh_market):
            f = lambda u: cf_at(m, 1.0, u)
            for form in ("printed", "ustat"):
                a = cov_kernel_S(f, 1.0, 2.2, form=form)
                b = cov_kernel_S(f, 2.2, 1.0, form=form)
                assert a == pytest.approx(b, abs=1e-13)

    def test_ustat_matches_finite_n_limit(self, stable_15):
        # the ustat kernel is the eps->0 limit of the finite-n identity
        for (u, v) in [(0.5, 0.5), (1.0, 2.0), (1.5, 2.5)]:
            f = lambda x: cf_at(stable_15, 1.0, x)
            lim = finite_n_cov(stable_15, 1.0, u, v, 1e-7) / 1e-7
            assert cov_kernel_S(f, u, v, form="ustat") == pytest.approx(lim, rel=1e-5)

    def test_mc_covariance_favors_ustat(self, stable_15):
        # Monte Carlo covariance of eps^{-1/2) Delta at (1, 2)
        n, reps = 500, 2500
        u, v = 1.0, 2.0
        pu = abs(complex(cf_at(stable_15, 1.0, u))) ** 2
        pv = abs(complex(cf_at(stable_15, 1.0, v))) ** 2
        du = np.empty(reps)
        dv = np.empty(reps)
        for i in range(reps):
            s = sample_increments(stable_15, 1.0, n, seed=7000 + i)
            du[i] = abs(np.mean(np.exp(1j * u * s.values))) ** 2 - pu
            dv[i] = abs(np.mean(np.exp(1j * v * s.values))) ** 2 - pv
        mc = np.cov(du, dv)[0, 1] * n
        se = np.std(du * dv) / np.sqrt(reps) * n
        f = lambda x: cf_at(stable_15, 1.0, x)
        assert abs(mc - cov_kernel_S(f, u, v, form="ustat")) < 3 * se
        assert abs(mc - cov_kernel_S(f, u, v, form="printed")) > 3 * se

    def test_plugin_grid_range_error(self, stable_15):
        est = make_estimate(stable_15, 1.0, np.linspace(0, 3, 61))
        with pytest.raises(CFGridError):
            cov_kernel_S(est, 2.0, 2.0)  # u+v = 4 beyond grid

    def test_plugin_matches_exact_on_grid(self, stable_15):
        g = np.linspace(0, 6, 241)
        est = make_estimate(stable_15, 1.0, g)
        f = lambda x: cf_at(stable_15, 1.0, x)
        for form in ("printed", "ustat"):
            a = cov_kernel_S(est, 1.0, 2.0, form=form)
            b = cov_kernel_S(f, 1.0, 2.0, form=form)
            assert a == pytest.approx(b, abs=1e-12)


class TestFiniteNCov:
    def test_degenerate_origin(self, stable_15):
        assert finite_n_cov(stable_15, 1.0, 0.0, 0.0, 1.0 / 100) == pytest.approx(0.0, abs=1e-14)

    def test_limit_stability(self, stable_15):
        # n = 1e6 vs 1e7, both divided by eps, agree on the leading term
        a = finite_n_cov(stable_15, 1.0, 1.0, 1.0, 1e-6) * 1e6
        b = finite_n_cov(stable_15, 1.0, 1.0, 1.0, 1e-7) * 1e7
        assert a == pytest.approx(b, rel=2e-6)

    def test_mc_variance_of_phi2(self, stable_15):
        n, reps = 500, 5000
        u = 1.0
        vals = np.empty(reps)
        for i in range(reps):
            s = sample_increments(stable_15, 1.0, n, seed=40000 + i)
            vals[i] = abs(np.mean(np.exp(1j * u * s.values))) ** 2
        mc_var = vals.var(ddof=1)
        se = np.std((vals - vals.mean()) ** 2) / np.sqrt(reps)
        want = finite_n_cov(stable_15, 1.0, u, u, 1.0 / n)
        assert abs(mc_var - want) < 3 * se

    def test_eps_validation(self, stable_15):
        with pytest.raises(ValueError):
            finite_n_cov(stable_15, 1.0, 1.0, 1.0, 0.3)


class TestSerialization:
    def test_round_trip(self, stable_15):
        est = make_estimate(stable_15, 1.0, np.linspace(0, 5, 33), eps=0.002, tag="Q")
        back = CFEstimate.from_csv(est.to_csv())
        assert back.eps == est.eps
        assert back.measure_tag == "Q"
        assert np.array_equal(back.grid, est.grid)
        assert np.array_equal(back.values, est.values)

    def test_invariants(self):
        with pytest.raises(ValueError):
            CFEstimate(grid=np.array([0.0]), values=np.array([1.0 + 0j]), eps=0.1)
        with pytest.raises(ValueError):
            CFEstimate(grid=np.array([0.0, 1.0]), values=np.ones(2, complex), eps=0.0)
