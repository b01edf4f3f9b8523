import numpy as np
import pytest

from levyspec.models import GH, STABLE, STABLE_DIFF, ModelSpec


@pytest.fixture(scope="session")
def stable_15():
    return ModelSpec(family=STABLE, eta=1.0, alpha=1.5)


@pytest.fixture(scope="session")
def stable_10():
    return ModelSpec(family=STABLE, eta=1.0, alpha=1.0)


@pytest.fixture(scope="session")
def gh_sim():
    # time-series study model
    return ModelSpec(family=GH, kappa=1.0, beta=0.0, delta=1.0, lam=1.0)


@pytest.fixture(scope="session")
def gh_market():
    # option-market study model (risk-neutralizable: kappa > |beta + 1|)
    return ModelSpec(family=GH, kappa=2.0, beta=-1.0, delta=1.0, lam=1.0)


@pytest.fixture(scope="session")
def stable_diff():
    return ModelSpec(family=STABLE_DIFF, eta=1.0, alpha=1.0, a=0.1)


def assert_close(actual, expected, tol, label=""):
    actual = np.asarray(actual)
    expected = np.asarray(expected)
    err = np.max(np.abs(actual - expected))
    assert err <= tol, f"{label}: |diff| = {err:.3e} > {tol:.1e}"


def payoff_quadrature_oracle(model_q, T, ys, max_dx=0.001):
    """Brute-force option prices: trapezoid of the payoff against the
    Fourier-inverted density.  The call-side integral is truncated where
    e^x * density(x) first drops below 1e-13 of its bulk peak; beyond that
    point the FFT noise floor, amplified by e^x, would otherwise fabricate
    mass (puts integrate a bounded weight and need no cutoff)."""
    from levyspec.models import auto_grid, density_on_grid

    x = auto_grid(model_q, T, max_dx=max_dx)
    p = density_on_grid(model_q, T, x)
    w = np.exp(x) * p
    centre = np.searchsorted(x, 2.0)
    ref_scale = w[np.abs(x) < 5].max()
    below = np.nonzero(w[centre:] < 1e-13 * ref_scale)[0]
    ihi = centre + below[0] if below.size else x.size - 1
    ys = np.atleast_1d(np.asarray(ys, dtype=float))
    out = np.empty(ys.size)
    idx = np.arange(x.size)
    for i, y in enumerate(ys):
        if y >= 0:
            m = (x >= y) & (idx <= ihi)
            out[i] = np.trapezoid((np.exp(x[m]) - np.exp(y)) * p[m], x[m])
        else:
            m = x <= y
            out[i] = np.trapezoid((np.exp(y) - np.exp(x[m])) * p[m], x[m])
    return out
