"""Spectral cut-off estimation of the fractional order.

For a Levy exponent psi(u) = i mu u + theta(u) with theta(u) = -eta |u|^alpha tau(u),
tau -> 1, the double-log transform of the squared cf modulus is affine in log u
up to a vanishing correction:

    Y(u) = log(-log |phi(u)|^2) = log(2 eta) + alpha log u + log(Re tau(u)).

Plugging an estimated cf requires clamping |phi~|^2 into (0, 1) (truncation
operator) and discarding high frequencies, where the slope coefficient

    zeta_1(u) = 1 / (2 |phi(u)|^2 log |phi(u)|)

blows up exponentially.  The estimate is a weighted quadrature

    alpha~_U = int w^U(u) Y~(u) du,     w^U(u) = U^{-1} w^1(u / U),

with w^1 supported on [ell, 1], zero mean and unit log-moment, which makes the
intercept drop out and the slope come through exactly.  A cutoff ladder of
such estimates feeds the stagewise aggregation in :mod:`levyspec.adaptive`.

The diffusion-removal variant replaces |phi~|^2 by the ratio
rho~_xi(u) = |phi~(u)|^{2 xi^2} / |phi~(xi u)|^2, which cancels the Gaussian
component exactly and has -log rho_xi = 2 eta (xi^2 - xi^alpha) u^alpha tau_xi(u).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .ecf import CFEstimate, cov_kernel_S
from .models import GH, STABLE, STABLE_DIFF, ModelSpec, RLEClassSpec, char_exponent


class CoverageError(ValueError):
    """Curve grid does not span the weight support."""


class BracketingError(ValueError):
    """Truncation levels violate the linearization bracketing condition."""


class TruncationDomainError(ValueError):
    """|phi|^2 outside (0, 1) where a finite level or coefficient is required."""


# ---------------------------------------------------------------------------
# truncation
# ---------------------------------------------------------------------------

def _level_values(spec, u: np.ndarray) -> np.ndarray:
    if callable(spec):
        return np.asarray(spec(u), dtype=float)
    arr = np.asarray(spec, dtype=float)
    if arr.ndim == 0:
        return np.full(u.shape, float(arr))
    if arr.shape != u.shape:
        raise TruncationDomainError(
            "array truncation levels are positional and must match the grid "
            f"they were built for (got {arr.shape} vs {u.shape})")
    return arr


@dataclass(frozen=True, eq=False)
class TruncationLevels:
    """Clamp levels for |phi~|^2: constants in (0,1), functions of u, or
    arrays aligned with the grid they were derived from."""

    omega_minus: object = 0.01
    omega_plus: object = 0.95

    def resolve(self, u) -> tuple[np.ndarray, np.ndarray]:
        u = np.asarray(u, dtype=float)
        lo = _level_values(self.omega_minus, u)
        hi = _level_values(self.omega_plus, u)
        if np.any(lo <= 0) or np.any(hi >= 1) or np.any(lo > hi):
            raise TruncationDomainError("need 0 < omega_minus <= omega_plus < 1 pointwise")
        return lo, hi


DEFAULT_LEVELS = TruncationLevels(0.01, 0.95)


def truncate(f_values, levels: TruncationLevels, u=None):
    """Pointwise clamp of f into [omega_minus(u), omega_plus(u)]."""
    f = np.asarray(f_values, dtype=float)
    lo, hi = levels.resolve(np.zeros_like(f) if u is None else u)
    return np.clip(f, lo, hi)


def oracle_levels(phi_mod2_values) -> TruncationLevels:
    """Tightest admissible levels around known |phi|^2,

        omega_pm^*(u) = |phi|^2 (1 +/- 2|log|phi|| / (1 + 2|log|phi||)),

    which never clip exact data and satisfy the linearization bracketing.
    Returned as arrays aligned with the input grid.
    """
    p = np.asarray(phi_mod2_values, dtype=float)
    if np.any(p <= 0) or np.any(p >= 1):
        raise TruncationDomainError("oracle levels need |phi|^2 in (0, 1)")
    two_log = np.abs(np.log(p))  # 2 |log |phi||
    r = two_log / (1.0 + two_log)
    return TruncationLevels(p * (1 - r), p * (1 + r))


def zeta_coefficients(phi_mod2, levels: TruncationLevels, u=None):
    """Linearization coefficients at known |phi|^2:

        zeta_1 = 1 / (2 |phi|^2 log |phi|)   (negative),
        zeta_2 = 2 max_{x in {omega_-, omega_+}} (1 + |log x|) / (x^2 log^2 x).
    """
    p = np.asarray(phi_mod2, dtype=float)
    if np.any(p <= 0) or np.any(p >= 1):
        raise TruncationDomainError("zeta coefficients need |phi|^2 in (0, 1)")
    zeta1 = 1.0 / (p * np.log(p))  # log(|phi|^2) = 2 log |phi|
    lo, hi = levels.resolve(np.zeros_like(p) if u is None else u)
    blo = (1 + np.abs(np.log(lo))) / (lo**2 * np.log(lo) ** 2)
    bhi = (1 + np.abs(np.log(hi))) / (hi**2 * np.log(hi) ** 2)
    zeta2 = 2.0 * np.maximum(blo, bhi)
    return zeta1, zeta2


# ---------------------------------------------------------------------------
# the transformed curve
# ---------------------------------------------------------------------------

@dataclass
class SpectralCurve:
    """Y~(u) = log(-log T[|phi~|^2](u)) on a positive grid, with the clamp
    activity recorded per node."""

    grid: np.ndarray
    values: np.ndarray
    levels: TruncationLevels
    clip_mask: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("spectral curve values must be finite")

    def to_csv(self) -> str:
        lines = ["u,y,clipped"]
        for u, y, c in zip(self.grid, self.values, self.clip_mask):
            lines.append(f"{float(u)!r},{float(y)!r},{int(c)}")
        return "\n".join(lines) + "\n"


def y_curve(cf: CFEstimate, levels: TruncationLevels = DEFAULT_LEVELS) -> SpectralCurve:
    """Double-log transform of the truncated squared cf modulus."""
    if np.any(cf.grid == 0):
        raise ValueError("y_curve grid must exclude u = 0")
    p = np.abs(cf.values) ** 2
    clipped = truncate(p, levels, cf.grid)
    mask = clipped != p
    return SpectralCurve(grid=cf.grid.copy(), values=np.log(-np.log(clipped)),
                         levels=levels, clip_mask=mask)


def rho_xi(cf: CFEstimate, xi: float):
    """Diffusion-cancelling ratio rho~_xi(u) = |phi~(u)|^{2 xi^2} / |phi~(xi u)|^2.

    Returns (u, rho) on the subgrid where xi*u is also a grid node and
    |phi~(xi u)| > 0; raises if that set is empty.
    """
    if xi <= 1:
        raise ValueError("xi must be > 1")
    g = cf.grid
    h = np.min(np.diff(g))
    j = np.rint((xi * g - g[0]) / h).astype(int)
    on_grid = (j < g.size) & (np.abs(g[0] + j * h - xi * g) < 1e-9 * max(1.0, g[-1]))
    if not np.any(on_grid):
        raise CoverageError("no grid nodes u with xi*u also on the grid")
    u = g[on_grid]
    base = np.abs(cf.values[on_grid]) ** 2
    denom = np.abs(cf.values[j[on_grid]]) ** 2
    ok = denom > 0
    if not np.any(ok):
        raise ZeroDivisionError("|phi~(xi u)| vanishes on the whole candidate set")
    u, base, denom = u[ok], base[ok], denom[ok]
    return u, base ** (xi**2) / denom


def y_curve_xi(cf: CFEstimate, xi: float,
               levels: TruncationLevels = DEFAULT_LEVELS) -> SpectralCurve:
    """Double-log transform of the truncated diffusion-cancelling ratio."""
    u, rho = rho_xi(cf, xi)
    keep = u > 0
    u, rho = u[keep], rho[keep]
    clipped = truncate(rho, levels, u)
    mask = clipped != rho
    return SpectralCurve(grid=u, values=np.log(-np.log(clipped)),
                         levels=levels, clip_mask=mask)


# ---------------------------------------------------------------------------
# weights
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeightSpec:
    """Slope-extracting weight w^1(x) = x 1{ell <= x <= 1} (A1 log x - A2),
    scaled to cutoff U by w^U(u) = U^{-1} w^1(u/U).

    A1, A2 solve the closed-form 2x2 moment system enforcing
    int w^1 = 0 and int w^1 log = 1 over [ell, 1].
    """

    U: float
    ell: float
    A1: float
    A2: float

    def w1(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.ell) & (x <= 1.0)
        safe = np.where(x > 0, x, 1.0)
        return np.where(inside, x * (self.A1 * np.log(safe) - self.A2), 0.0)

    def wU(self, u):
        return self.w1(np.asarray(u, dtype=float) / self.U) / self.U

    @property
    def support(self) -> tuple[float, float]:
        return self.ell * self.U, self.U


def build_weight(U: float, ell: float) -> WeightSpec:
    """Solve the moment system for the weight on [ell, 1] in closed form:

        m0 = int x dx,  m1 = int x log x dx,  m2 = int x log^2 x dx,
        A1 = m0 / (m0 m2 - m1^2),  A2 = m1 / (m0 m2 - m1^2).
    """
    if not 0 < ell < 1:
        raise ValueError("need 0 < ell < 1")
    if U <= 0:
        raise ValueError("need U > 0")
    le = math.log(ell)
    m0 = (1 - ell**2) / 2
    m1 = (ell**2 - 1) / 4 - ell**2 * le / 2
    m2 = -(ell**2) * le**2 / 2 - m1
    det = m0 * m2 - m1**2
    if det <= 0:
        raise ValueError("singular moment system (ell too close to 1)")
    return WeightSpec(U=float(U), ell=float(ell), A1=m0 / det, A2=m1 / det)


def _support_nodes(grid: np.ndarray, w: WeightSpec):
    lo, hi = w.support
    tol = 1e-9 * max(1.0, hi)
    sel = np.nonzero((grid >= lo - tol) & (grid <= hi + tol))[0]
    if sel.size < 3:
        raise CoverageError(
            f"grid has {sel.size} nodes in the weight support [{lo:.4g}, {hi:.4g}]")
    u = grid[sel]
    h = np.max(np.diff(u))
    if u[0] > lo + h or u[-1] < hi - h:
        raise CoverageError(
            f"grid [{u[0]:.4g}, {u[-1]:.4g}] does not span the support [{lo:.4g}, {hi:.4g}]")
    return sel, u


def _discrete_weight(u: np.ndarray, w: WeightSpec) -> np.ndarray:
    """Trapezoid-weighted values of w^U on the nodes, with A1, A2 re-solved on
    the discrete moments so that sum q = 0 and sum q log u = 1 hold exactly.
    This keeps the estimator exact on affine-in-log data regardless of grid
    resolution, which is what the continuum normalization promises."""
    t = np.empty_like(u)
    t[1:-1] = 0.5 * (u[2:] - u[:-2])
    t[0] = 0.5 * (u[1] - u[0])
    t[-1] = 0.5 * (u[-1] - u[-2])
    base = t * (u / w.U**2)  # trapezoid weight times the ramp part of w^U
    lg = np.log(u)
    b0 = base.sum()
    b1 = (base * lg).sum()
    b2 = (base * lg**2).sum()
    det = b0 * b2 - b1**2
    if det <= 0:
        raise CoverageError("degenerate discrete moment system on the support")
    a1 = b0 / det
    a2 = b1 / det
    return base * (a1 * lg - a2)


def estimate_alpha(curve: SpectralCurve, w: WeightSpec) -> float:
    """Weighted quadrature of the transformed curve over the weight support.

    Uses the discrete moment normalization of :func:`_discrete_weight`, so a
    constant shift of the curve changes nothing and a c*log(u) shift changes
    the value by exactly c.
    """
    sel, u = _support_nodes(curve.grid, w)
    q = _discrete_weight(u, w)
    return float(q @ curve.values[sel])


def estimate_alpha_xi(cf: CFEstimate, xi: float, levels: TruncationLevels,
                      w: WeightSpec) -> float:
    """Cut-off estimate on the diffusion-cancelling ratio curve."""
    return estimate_alpha(y_curve_xi(cf, xi, levels), w)


# ---------------------------------------------------------------------------
# bias, cutoffs, variance
# ---------------------------------------------------------------------------

def _tau_parameters(model: ModelSpec) -> tuple[float, float]:
    """(eta, alpha) entering theta(u) = -eta |u|^alpha tau(u) for the jump part."""
    if model.family in (STABLE, STABLE_DIFF):
        return model.eta, model.alpha
    return model.delta, 1.0  # GH: theta ~ -delta |u| for large |u|


def re_tau(model: ModelSpec, u) -> np.ndarray:
    """Re tau(u) = Re[-theta_jump(u)] / (eta |u|^alpha) from the exact exponent."""
    u = np.asarray(u, dtype=float)
    eta, alpha = _tau_parameters(model)
    theta = char_exponent(model, u) - 1j * model.mu * u
    if model.a > 0:
        theta = theta + 0.5 * model.a**2 * u**2
    return np.real(-theta) / (eta * np.abs(u) ** alpha)


def bias_RU(model: ModelSpec, w: WeightSpec, n_quad: int = 4001) -> float:
    """Misspecification bias R_U = int w^U(u) log(Re tau(u)) du by composite
    Simpson rule on the weight support; vanishes identically for stable models."""
    if model.family in (STABLE, STABLE_DIFF):
        return 0.0
    from scipy.integrate import simpson

    lo, hi = w.support
    u = np.linspace(lo, hi, n_quad if n_quad % 2 else n_quad + 1)
    rt = re_tau(model, u)
    if np.any(rt <= 0):
        raise TruncationDomainError("Re tau <= 0 on the weight support")
    return float(simpson(w.wU(u) * np.log(rt), x=u))


def theoretical_cutoff(eps: float, cls: RLEClassSpec, regime: str) -> float:
    """Rate-optimal cutoff for noise level eps:

        regime "P":          U = [(2 eta_+)^{-1} log(eps^{-1} log^{-b}(1/eps))]^{1/alpha_bar},
                             b = 1 + varkappa / alpha_bar
        regime "Q":          same U with b = (varkappa + 4)/alpha_bar - 1
        regime "diffusion":  U = [(2 a_bar)^{-1} log(eps^{-1} log^{-b}(1/eps))]^{1/2},
                             b = 1 + varkappa / 2
    """
    if not 0 < eps < 1:
        raise ValueError("eps must be in (0, 1)")
    if regime == "P":
        b = 1 + cls.varkappa / cls.alpha_bar
        scale, power = 2 * cls.eta_plus, 1.0 / cls.alpha_bar
    elif regime == "Q":
        b = (cls.varkappa + 4) / cls.alpha_bar - 1
        scale, power = 2 * cls.eta_plus, 1.0 / cls.alpha_bar
    elif regime == "diffusion":
        if cls.a_bar <= 0:
            raise ValueError("diffusion regime needs a_bar > 0")
        b = 1 + cls.varkappa / 2
        scale, power = 2 * cls.a_bar, 0.5
    else:
        raise ValueError(f"unknown regime {regime!r}")
    inner = math.log(1 / eps)
    arg = (1 / eps) * inner ** (-b)
    if arg <= 1 or math.log(arg) <= 0:
        raise ValueError(f"eps={eps} too large for the {regime} cutoff formula")
    return (math.log(arg) / scale) ** power


def variance_sigma(cf: CFEstimate, w: WeightSpec, kernel: str = "ustat",
                   levels: TruncationLevels = DEFAULT_LEVELS,
                   zeta_envelope: bool = False) -> float:
    """Quadrature variance functional of the cut-off estimate,

        sigma^2 = sum_ij q_i zeta_1(u_i) q_j zeta_1(u_j) S(u_i, u_j),

    with q the discrete weight, zeta_1 the plug-in slope coefficient on the
    truncated |phi~|^2 and S the selected covariance kernel (see
    :func:`levyspec.ecf.cov_kernel_S`).  The actual variance of alpha~_U is
    eps * sigma^2.  `zeta_envelope=True` replaces zeta_1 by its largest
    magnitude over the support (a deliberate upper bound).  Result is
    symmetrized and clipped at 0; small negative quadrature artifacts raise a
    warning.
    """
    sel, u = _support_nodes(cf.grid, w)
    q = _discrete_weight(u, w)
    p = truncate(np.abs(cf.values[sel]) ** 2, levels, u)
    zeta1 = 1.0 / (p * np.log(p))
    if zeta_envelope:
        zeta1 = np.full_like(zeta1, -np.max(np.abs(zeta1)))
    S = cov_kernel_S(cf, u[:, None], u[None, :], form=kernel)
    S = 0.5 * (S + S.T)
    a = q * zeta1
    sigma2 = float(a @ S @ a)
    if sigma2 < 0:
        if sigma2 < -1e-12:
            warnings.warn(f"variance quadrature clipped from {sigma2:.3e} to 0",
                          RuntimeWarning, stacklevel=2)
        sigma2 = 0.0
    return sigma2


# ---------------------------------------------------------------------------
# linearization inequality report
# ---------------------------------------------------------------------------

@dataclass
class LinearizationReport:
    grid: np.ndarray
    q_values: np.ndarray
    bound_values: np.ndarray

    @property
    def max_violation(self) -> float:
        return float(np.max(np.abs(self.q_values) - self.bound_values))

    @property
    def holds(self) -> bool:
        return self.max_violation <= 0


def lemma61_residual(cf: CFEstimate, exact_phi_mod2, levels: TruncationLevels) -> LinearizationReport:
    """Per-node check of the linearization remainder bound

        Y~ - Y = zeta_1 Delta + Q,   |Q| <= zeta_2 Delta^2,

    valid whenever the levels bracket: omega_- <= omega_-^* <= omega_+^* <= omega_+.
    Raises BracketingError if the bracketing fails at any node.
    """
    p_exact = np.asarray(exact_phi_mod2, dtype=float)
    orc = oracle_levels(p_exact)
    lo, hi = levels.resolve(cf.grid)
    lo_star = np.asarray(orc.omega_minus, dtype=float)
    hi_star = np.asarray(orc.omega_plus, dtype=float)
    bad = (lo > lo_star + 1e-15) | (hi < hi_star - 1e-15)
    if np.any(bad):
        raise BracketingError(
            f"levels fail omega_- <= omega_-^* <= omega_+^* <= omega_+ at "
            f"{int(bad.sum())} nodes (first at u={cf.grid[bad][0]:.4g})")
    zeta1, zeta2 = zeta_coefficients(p_exact, levels, cf.grid)
    y_exact = np.log(-np.log(p_exact))
    curve = y_curve(cf, levels)
    delta = np.abs(cf.values) ** 2 - p_exact
    q = curve.values - y_exact - zeta1 * delta
    return LinearizationReport(grid=cf.grid.copy(), q_values=q,
                               bound_values=zeta2 * delta**2)
