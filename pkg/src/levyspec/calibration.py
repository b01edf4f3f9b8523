"""Recovery of the risk-neutral characteristic function from noisy quotes.

Two routes:

  direct    phi~(u) = 1 - u(u+i) sum_j delta_j O~(y_j) e^{i u y_j}
            (Riemann-sum inversion of the option-transform identity on the
            exponentially weighted quotes)

  spline    penalized natural-cubic-spline smoothing of the raw quotes with a
            GCV-selected roughness penalty, FFT of the damped fit e^{-y} O^(y)
            on a fine dyadic grid, then

                psi~(v) = T^{-1} log(1 - v(v+i) F[O^](v+i)),

            with the complex log unwound for continuity outward from v = 0,
            where the argument equals 1.

The smoother minimizes sum_i (data_i - f(t_i))^2 + L int f''(y)^2 dy over all
twice-differentiable f; the minimizer is the natural cubic spline with knots
at the design points, computed by the banded second-difference formulation:
with Q the (N x N-2) second-difference matrix and R the tridiagonal Gram
matrix of the h's, gamma solves (R + L Q'Q) gamma = Q'z and the fitted values
are f = z - L Q gamma.  L -> 0 interpolates; L -> infinity is the OLS line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import cho_solve_banded, cholesky_banded

from .ecf import CFEstimate
from .market import OptionQuoteSet

try:  # pragma: no cover
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

EXTRAPOLATION_GAP = 5.0  # artificial zero-value knots this far beyond the data


class BranchAmbiguityError(RuntimeError):
    """Adjacent grid arguments of the log differ by ~pi; grid too coarse."""


@dataclass
class SplineFit:
    """Natural cubic smoothing-spline fit: knots (design points plus the two
    extrapolated zero-value endpoints), fitted values theta at the knots (the
    coefficients in the cardinal natural-spline basis), penalty and GCV score.
    """

    knots: np.ndarray
    theta: np.ndarray
    penalty: float
    gcv_score: float
    _spline: CubicSpline | None = None

    def __post_init__(self):
        if self._spline is None:
            self._spline = CubicSpline(self.knots, self.theta, bc_type="natural")

    def __call__(self, y):
        return self._spline(y)

    def second_derivative(self, y):
        return self._spline(y, 2)


@dataclass
class ExponentCurve:
    """Estimated characteristic exponent on a symmetric v-grid with a
    continuity certificate: adjacent unwound imaginary parts differ < pi."""

    grid: np.ndarray
    values: np.ndarray
    branch_anchor: float  # |log argument - 1| at the anchor node v ~ 0

    def __post_init__(self):
        jumps = np.abs(np.diff(np.imag(self.values)))
        if jumps.size and jumps.max() >= np.pi:
            raise BranchAmbiguityError(
                f"imaginary part jumps by {jumps.max():.3f} >= pi between nodes")

    def to_csv(self) -> str:
        lines = ["v,re_psi,im_psi"]
        for v, z in zip(self.grid, self.values):
            lines.append(f"{float(v)!r},{float(z.real)!r},{float(z.imag)!r}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# direct route
# ---------------------------------------------------------------------------

def direct_cf_Q(quotes: OptionQuoteSet, u_grid) -> CFEstimate:
    """Riemann-sum estimator of phi_T under Q from exponentially weighted
    noisy quotes; exactly 1 at u = 0."""
    if not quotes.weighted:
        raise ValueError("direct_cf_Q expects exponentially weighted quotes")
    u = np.asarray(u_grid, dtype=float)
    phase = np.exp(1j * u[:, None] * quotes.y[None, :])
    s = phase @ (quotes.deltas * quotes.noisy)
    vals = 1.0 - u * (u + 1j) * s
    return CFEstimate(grid=u, values=vals, eps=quotes.noise_level(), measure_tag="Q")


# ---------------------------------------------------------------------------
# smoothing spline
# ---------------------------------------------------------------------------

def _spline_system(knots: np.ndarray):
    """R (tridiagonal, as solveh_banded layout) and Q bands for the knots."""
    h = np.diff(knots)
    n = knots.size
    m = n - 2
    # R: m x m symmetric tridiagonal
    r_diag = (h[:-1] + h[1:]) / 3.0
    r_off = h[1:-1] / 6.0
    # Q columns j = 1..n-2 have entries at rows j-1, j, j+1
    q_up = 1.0 / h[:-1]            # row j-1
    q_mid = -1.0 / h[:-1] - 1.0 / h[1:]  # row j
    q_dn = 1.0 / h[1:]             # row j+1
    return h, r_diag, r_off, q_up, q_mid, q_dn


def _qt_z(z, q_up, q_mid, q_dn):
    return q_up * z[:-2] + q_mid * z[1:-1] + q_dn * z[2:]


def _q_gamma(gamma, q_up, q_mid, q_dn, n):
    out = np.zeros(n)
    out[:-2] += q_up * gamma
    out[1:-1] += q_mid * gamma
    out[2:] += q_dn * gamma
    return out


def _qtq_bands(q_up, q_mid, q_dn):
    """Lower bands (0, 1, 2 subdiagonals) of the pentadiagonal Q'Q."""
    m = q_up.size
    d0 = q_up**2 + q_mid**2 + q_dn**2
    d1 = q_mid[:-1] * q_up[1:] + q_dn[:-1] * q_mid[1:]
    d2 = q_dn[:-2] * q_up[2:]
    bands = np.zeros((3, m))
    bands[0] = d0
    bands[1, :-1] = d1
    bands[2, :-2] = d2
    return bands


def _selected_inverse_band2_py(cl):
    """In-band entries of B^{-1} from the lower-banded Cholesky factor of B
    (bandwidth 2): z0[i] = (B^{-1})_{ii}, z1[i] = (B^{-1})_{i+1,i},
    z2[i] = (B^{-1})_{i+2,i}."""
    m = cl.shape[1]
    z0 = np.zeros(m)
    z1 = np.zeros(m)
    z2 = np.zeros(m)
    for i in range(m - 1, -1, -1):
        # convert the LL' column to unit-lower LDL' form
        diag = cl[0, i]
        d = diag * diag
        l1 = cl[1, i] / diag if i + 1 < m else 0.0
        l2 = cl[2, i] / diag if i + 2 < m else 0.0
        if i + 2 < m:
            z2[i] = -(l1 * z1[i + 1] + l2 * z0[i + 2])
        if i + 1 < m:
            z1[i] = -(l1 * z0[i + 1] + l2 * z1[i + 1])
        z0[i] = 1.0 / d - l1 * z1[i] - l2 * z2[i]
    return z0, z1, z2


if _HAVE_NUMBA:
    _selected_inverse_band2 = numba.njit(cache=True)(_selected_inverse_band2_py)
else:  # pragma: no cover
    _selected_inverse_band2 = _selected_inverse_band2_py


class _SmootherWorkspace:
    """Factorization-ready pieces for one knot layout; reused across the GCV
    penalty scan.  Systems are Jacobi-equilibrated before the banded Cholesky
    (random designs have knot gaps spanning several orders of magnitude, and
    Q'Q entries scale like 1/h^3)."""

    def __init__(self, knots: np.ndarray, z: np.ndarray):
        self.knots = knots
        self.z = z
        (self.h, self.r_diag, self.r_off,
         self.q_up, self.q_mid, self.q_dn) = _spline_system(knots)
        self.qtz = _qt_z(z, self.q_up, self.q_mid, self.q_dn)
        self.qtq = _qtq_bands(self.q_up, self.q_mid, self.q_dn)
        m = self.r_diag.size
        self.r_bands = np.zeros((3, m))
        self.r_bands[0] = self.r_diag
        self.r_bands[1, :-1] = self.r_off

    def _factor(self, L: float):
        bands = self.r_bands + L * self.qtq
        d = 1.0 / np.sqrt(bands[0])
        scaled = np.empty_like(bands)
        scaled[0] = 1.0
        scaled[1, :-1] = bands[1, :-1] * d[:-1] * d[1:]
        scaled[1, -1] = 0.0
        scaled[2, :-2] = bands[2, :-2] * d[:-2] * d[2:]
        scaled[2, -2:] = 0.0
        # near-duplicate design points leave the equilibrated system
        # borderline indefinite in float arithmetic; ridge only on failure
        for ridge in (0.0, 1e-12, 1e-10, 1e-8):
            try:
                work = scaled if ridge == 0.0 else np.vstack(
                    [scaled[0] + ridge, scaled[1:]])
                return cholesky_banded(work, lower=True), d
            except np.linalg.LinAlgError:
                continue
        raise np.linalg.LinAlgError(
            "smoothing-spline system not factorizable even with ridge")

    def solve(self, L: float):
        """Fitted values, gamma, and tr H at penalty L."""
        n = self.knots.size
        if L == 0:
            return self.z.copy(), None, float(n)
        cb, d = self._factor(L)
        gamma = d * cho_solve_banded((cb, True), d * self.qtz)
        fitted = self.z - L * _q_gamma(gamma, self.q_up, self.q_mid, self.q_dn, n)
        # tr H = n - L tr(B^{-1} Q'Q); selected inverse of the scaled factor
        # gives exactly the in-band entries of B^{-1} needed for the trace
        cl = np.ascontiguousarray(cb)
        z0, z1, z2 = _selected_inverse_band2(cl)
        c = self.qtq
        tr_bc = float(np.sum(z0 * d * d * c[0])
                      + 2 * np.sum(z1[:-1] * d[:-1] * d[1:] * c[1, :-1])
                      + 2 * np.sum(z2[:-2] * d[:-2] * d[2:] * c[2, :-2]))
        return fitted, gamma, n - L * tr_bc


def _augmented_data(quotes: OptionQuoteSet):
    span = quotes.y[-1] - quotes.y[0]
    if quotes.n < 4 or np.min(np.diff(quotes.y)) <= 1e-12 * span:
        raise ValueError("need at least 4 well-separated moneyness points")
    knots = np.concatenate([[quotes.y[0] - EXTRAPOLATION_GAP], quotes.y,
                            [quotes.y[-1] + EXTRAPOLATION_GAP]])
    z = np.concatenate([[0.0], quotes.noisy, [0.0]])
    return knots, z


def spline_fit(quotes: OptionQuoteSet, L: float | None = None) -> SplineFit:
    """Penalized least-squares natural cubic spline through the noisy quotes
    augmented with zero-value knots EXTRAPOLATION_GAP beyond each end.
    L = None selects the penalty by generalized cross-validation."""
    knots, z = _augmented_data(quotes)
    if L is None:
        L = gcv_select(quotes)
    ws = _SmootherWorkspace(knots, z)
    fitted, _, tr = ws.solve(float(L))
    n = knots.size
    rss = float(np.sum((z - fitted) ** 2))
    gcv = math.inf if tr >= n else n * rss / (n - tr) ** 2
    return SplineFit(knots=knots, theta=fitted, penalty=float(L), gcv_score=gcv)


def gcv_grid(lo: float = 1e-8, hi: float = 1e4, count: int = 60) -> np.ndarray:
    return np.geomspace(lo, hi, count)


def gcv_select(quotes: OptionQuoteSet, grid: np.ndarray | None = None) -> float:
    """Penalty minimizing GCV(L) = n RSS(L) / (n - tr H_L)^2 over a fixed
    log-spaced candidate grid."""
    if quotes.n < 8:
        raise ValueError("GCV selection needs at least 8 quotes")
    knots, z = _augmented_data(quotes)
    ws = _SmootherWorkspace(knots, z)
    n = knots.size
    best_l, best_g = None, np.inf
    for L in (gcv_grid() if grid is None else np.asarray(grid, dtype=float)):
        fitted, _, tr = ws.solve(float(L))
        rss = float(np.sum((z - fitted) ** 2))
        g = n * rss / (n - tr) ** 2 if tr < n else np.inf
        if g < best_g:
            best_l, best_g = float(L), g
    return best_l


def hat_trace(quotes: OptionQuoteSet, L: float) -> float:
    knots, z = _augmented_data(quotes)
    return _SmootherWorkspace(knots, z).solve(float(L))[2]


def penalty_value(fit: SplineFit) -> float:
    """int f''^2 over the knot span, exact: f'' is piecewise linear between
    knots, so each interval contributes h/3 (g_i^2 + g_i g_{i+1} + g_{i+1}^2)."""
    g2 = fit.second_derivative(fit.knots)
    h = np.diff(fit.knots)
    return float(np.sum(h / 3.0 * (g2[:-1] ** 2 + g2[:-1] * g2[1:] + g2[1:] ** 2)))


# ---------------------------------------------------------------------------
# Fourier of the fit and exponent recovery
# ---------------------------------------------------------------------------

def fourier_of_fit(fit: SplineFit, m_samples: int = 2**15, m_pad: int = 2**21):
    """F[e^{-y} O^(y)](v) on a fine dyadic v-grid by FFT.

    The damped fit is sampled on m_samples uniform nodes over the knot span
    (it is zero at the span ends by construction of the fit data) and
    zero-padded to m_pad, which sets the v-resolution 2 pi / (m_pad * dy).
    Returns (v_grid, values) with v symmetric around 0.
    """
    a, b = fit.knots[0], fit.knots[-1]
    dy = (b - a) / m_samples
    y = a + dy * np.arange(m_samples)
    g = np.exp(-y) * fit(y)
    gz = np.concatenate([g, np.zeros(m_pad - m_samples)])
    j = np.arange(m_pad)
    dv = 2 * np.pi / (m_pad * dy)
    v = (j - m_pad / 2) * dv
    # F(v_j) = dy e^{i v_j a} sum_k g_k (-1)^k e^{2 pi i j k / m}
    tw = gz * (-1.0) ** j
    vals = dy * np.exp(1j * v * a) * (m_pad * np.fft.ifft(tw))
    return v, vals


def exponent_from_transform(F_values, v_grid, T: float) -> ExponentCurve:
    """psi~(v) = T^{-1} log(1 - v(v+i) F[O^](v+i)) with the complex log
    unwound outward from v = 0 (argument exactly 1 there, so psi~(0) = 0)."""
    v = np.asarray(v_grid, dtype=float)
    F = np.asarray(F_values, dtype=complex)
    z = 1.0 - v * (v + 1j) * F
    amin = np.min(np.abs(z))
    if amin < 1e-12:
        raise ZeroDivisionError(f"log argument within {amin:.1e} of 0")
    anchor = int(np.argmin(np.abs(v)))
    dphi = np.angle(z[1:] * np.conj(z[:-1]))
    if np.any(np.abs(dphi) >= np.pi * (1 - 1e-9)):
        raise BranchAmbiguityError("consecutive log arguments jump by ~pi")
    arg = np.empty_like(v)
    arg[anchor] = np.angle(z[anchor])
    arg[anchor + 1:] = arg[anchor] + np.cumsum(dphi[anchor:])
    arg[:anchor] = arg[anchor] - np.cumsum(dphi[:anchor][::-1])[::-1]
    psi = (np.log(np.abs(z)) + 1j * arg) / T
    return ExponentCurve(grid=v, values=psi, branch_anchor=float(abs(z[anchor] - 1.0)))


def cf_from_exponent(curve: ExponentCurve, T: float, eps: float) -> CFEstimate:
    """exp(T psi~) restricted to v >= 0 (negative frequencies follow from
    Hermitian symmetry of the recovered exponent)."""
    keep = curve.grid >= 0
    return CFEstimate(grid=curve.grid[keep], values=np.exp(T * curve.values[keep]),
                      eps=eps, measure_tag="Q")


def cf_from_transform(F_values, v_grid, eps: float) -> CFEstimate:
    """CF estimate phi~(v) = 1 - v(v+i) F[O^](v+i) on v >= 0, with no
    exponent round trip.  Identical to cf_from_exponent after
    exponent_from_transform wherever the log is well defined, but usable on
    the full grid (high frequencies carry noise whose phase is arbitrary;
    downstream truncation consumes only the modulus there)."""
    v = np.asarray(v_grid, dtype=float)
    F = np.asarray(F_values, dtype=complex)
    z = 1.0 - v * (v + 1j) * F
    keep = v >= 0
    return CFEstimate(grid=v[keep], values=z[keep], eps=eps, measure_tag="Q")


def stable_band(F_values, v_grid, floor: float = 1e-9) -> float:
    """Largest |v| such that |1 - v(v+i)F| stays >= floor on the whole band
    around 0; the exponent curve is recoverable (branch-wise) inside it."""
    v = np.asarray(v_grid, dtype=float)
    F = np.asarray(F_values, dtype=complex)
    z = np.abs(1.0 - v * (v + 1j) * F)
    anchor = int(np.argmin(np.abs(v)))
    hi = v.size
    for i in range(anchor, v.size):
        if z[i] < floor:
            hi = i
            break
    lo = -1
    for i in range(anchor, -1, -1):
        if z[i] < floor:
            lo = i
            break
    return float(min(v[hi - 1], -v[lo + 1] if lo >= 0 else v[hi - 1]))
