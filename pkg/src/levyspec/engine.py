"""Per-rung estimation engine shared by the adaptive calibration and the CLI
pipelines.

For every cutoff U_k of a ladder it produces the pair (alpha~_k, var_k): the
cut-off estimate and its plug-in variance (the actual variance eps * sigma^2,
with the heuristic zeta-envelope upper bound by default).  Each rung works on
its own dyadic grid {j h_k : j = 0..2 m} with h_k = U_k / n_div, so u + v and
u - v lookups land exactly on nodes and the ratio curve can reach xi * u."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ecf import CFEstimate, ecf_on_multiples
from .models import ModelSpec, sample_increments
from .spectral import (
    DEFAULT_LEVELS,
    CoverageError,
    TruncationLevels,
    WeightSpec,
    build_weight,
    estimate_alpha,
    truncate,
    y_curve,
    y_curve_xi,
    _discrete_weight,
    _support_nodes,
)
from .ecf import cov_kernel_S


@dataclass(frozen=True)
class LadderPlan:
    """Everything needed to turn one cf estimate into per-rung statistics."""

    cutoffs: tuple
    ell: float = 0.1
    levels: TruncationLevels = DEFAULT_LEVELS
    n_div: int = 32
    xi: float | None = None
    kernel_form: str = "ustat"
    zeta_envelope: bool = True

    @property
    def K(self) -> int:
        return len(self.cutoffs)

    def weight(self, U: float) -> WeightSpec:
        return build_weight(U, self.ell)

    def rung_multiples(self, U: float) -> tuple[float, int]:
        """Grid step and node count covering the rung's lookup reach: u + v
        pairs need 2U, and the ratio variance needs xi*u + xi*v = 2*xi*U."""
        h = U / self.n_div
        reach = 2.0 * max(1.0, self.xi or 0.0)
        return h, int(math.ceil(reach * self.n_div))


def derive_seed(master: int, *indices: int) -> int:
    """Deterministic child seed from a master seed and an index path."""
    return int(np.random.SeedSequence([int(master), *map(int, indices)]).generate_state(1)[0])


def _variance_plain(est: CFEstimate, w: WeightSpec, plan: LadderPlan) -> float:
    sel, u = _support_nodes(est.grid, w)
    q = _discrete_weight(u, w)
    p = truncate(np.abs(est.values[sel]) ** 2, plan.levels, u)
    zeta1 = 1.0 / (p * np.log(p))
    if plan.zeta_envelope:
        zeta1 = np.full_like(zeta1, -np.max(np.abs(zeta1)))
    S = cov_kernel_S(est, u[:, None], u[None, :], form=plan.kernel_form)
    a = q * zeta1
    return max(float(a @ (0.5 * (S + S.T)) @ a), 0.0)


def _variance_ratio(est: CFEstimate, w: WeightSpec, plan: LadderPlan) -> float:
    """Delta-method variance of the ratio-curve estimate: the transformed
    curve error is a(u) Delta(u) + b(u) Delta(xi u) with

        a(u) = xi^2 / (log rho(u) p(u)),   b(u) = -1 / (log rho(u) p(xi u)),

    all plug-in quantities clamped by the truncation levels."""
    xi = plan.xi
    sel, u = _support_nodes(est.grid, w)
    q = _discrete_weight(u, w)
    p_u = truncate(np.abs(est.at(u)) ** 2, plan.levels, u)
    p_xu = truncate(np.abs(est.at(xi * u)) ** 2, plan.levels, u)
    rho = truncate(p_u ** (xi**2) / p_xu, plan.levels, u)
    log_rho = np.log(rho)
    a = xi**2 / (log_rho * p_u)
    b = -1.0 / (log_rho * p_xu)
    if plan.zeta_envelope:
        a = np.full_like(a, -np.max(np.abs(a)))
        b = np.full_like(b, np.max(np.abs(b)))
    form = plan.kernel_form
    s_uu = cov_kernel_S(est, u[:, None], u[None, :], form=form)
    s_ux = cov_kernel_S(est, u[:, None], xi * u[None, :], form=form)
    s_xu = cov_kernel_S(est, xi * u[:, None], u[None, :], form=form)
    s_xx = cov_kernel_S(est, xi * u[:, None], xi * u[None, :], form=form)
    G = (a[:, None] * a[None, :] * s_uu + a[:, None] * b[None, :] * s_ux
         + b[:, None] * a[None, :] * s_xu + b[:, None] * b[None, :] * s_xx)
    qa = q
    return max(float(qa @ (0.5 * (G + G.T)) @ qa), 0.0)


VAR_FLOOR = 1e-12  # degenerate plug-in variances (garbage rungs) floor here,
                   # which makes the aggregation reject any discrepancy on them


def rung_statistics(est: CFEstimate, U: float, plan: LadderPlan) -> tuple[float, float]:
    """(alpha~_U, variance of alpha~_U) from one cf estimate."""
    w = plan.weight(U)
    if plan.xi is None:
        curve = y_curve(_drop_zero(est), plan.levels)
        alpha = estimate_alpha(curve, w)
        var = est.eps * _variance_plain(est, w, plan)
    else:
        curve = y_curve_xi(est, plan.xi, plan.levels)
        alpha = estimate_alpha(curve, w)
        var = est.eps * _variance_ratio(est, w, plan)
    return alpha, max(var, VAR_FLOOR)


def _drop_zero(est: CFEstimate) -> CFEstimate:
    if est.grid[0] == 0.0:
        return CFEstimate(grid=est.grid[1:], values=est.values[1:], eps=est.eps,
                          measure_tag=est.measure_tag)
    return est


def ladder_statistics_from_sample(values: np.ndarray, eps: float,
                                  plan: LadderPlan) -> tuple[np.ndarray, np.ndarray]:
    """Per-rung (alpha~, variance) for an increment sample, using the
    cumulative-power empirical cf on each rung's dyadic grid."""
    alphas = np.empty(plan.K)
    variances = np.empty(plan.K)
    for k, U in enumerate(plan.cutoffs):
        h, m = plan.rung_multiples(U)
        vals = ecf_on_multiples(values, h, m)
        est = CFEstimate(grid=h * np.arange(m + 1), values=vals, eps=eps)
        alphas[k], variances[k] = rung_statistics(est, U, plan)
    return alphas, variances


def ladder_statistics_from_cf(cf: CFEstimate, plan: LadderPlan) -> tuple[np.ndarray, np.ndarray]:
    """Per-rung (alpha~, variance) for a cf estimate living on a fine uniform
    grid (the calibration route); rung grids snap to integer multiples of the
    source spacing so all lookups are exact."""
    dv = float(cf.grid[1] - cf.grid[0])
    alphas = np.empty(plan.K)
    variances = np.empty(plan.K)
    for k, U in enumerate(plan.cutoffs):
        h, m = plan.rung_multiples(U)
        r = max(1, int(round(h / dv)))
        h_snap = r * dv
        m_snap = int(math.ceil(m * h / h_snap))
        m_snap = min(m_snap, int(cf.grid[-1] / h_snap))  # stay inside the source
        grid = h_snap * np.arange(m_snap + 1)
        if grid[-1] < U:
            raise CoverageError(
                f"cf grid ends at {cf.grid[-1]:.4g}, below the rung cutoff {U:.4g}")
        est = CFEstimate(grid=grid, values=cf.at(grid), eps=cf.eps,
                         measure_tag=cf.measure_tag)
        alphas[k], variances[k] = rung_statistics(est, U, plan)
    return alphas, variances


def pilot_null_scale(values: np.ndarray, plan: LadderPlan,
                     alpha_mid: float = 1.0, dt: float = 1.0) -> tuple[float, float]:
    """Scale for the calibration null from the data's own clamp crossing.

    A symmetric stable null is informative on the same rung range as the data
    only if its |phi|^2 crosses the lower clamp level where the data's does;
    otherwise the sequential calibration sizes the acceptance thresholds at
    the wrong rungs and the aggregation freezes.  The pilot scans the
    empirical curve (the ratio curve when xi is set), finds the first
    crossing u^ below omega_minus and returns (eta^, u^) with

        eta^ = -log(omega_minus) / (2 c u^alpha_mid),

    c = 1 for the plain statistic and xi^2 - xi^alpha_mid for the ratio one.
    """
    u_max = max(plan.cutoffs)
    reach = max(2.0, plan.xi or 0.0)
    h = min(plan.cutoffs) * plan.ell / 4
    m = int(math.ceil(reach * u_max / h))
    m = min(m, 200_000)
    h = reach * u_max / m
    vals = ecf_on_multiples(values, h, m)
    p = np.abs(vals) ** 2
    lo, _ = plan.levels.resolve(h * np.arange(m + 1))
    if plan.xi is None:
        curve = p
        c = 1.0
    else:
        xi = plan.xi
        j = np.arange(m + 1)
        jj = np.minimum(np.rint(j * xi).astype(int), m)
        curve = np.where(p[jj] > 0, p ** (xi**2) / np.where(p[jj] > 0, p[jj], 1.0), 0.0)
        c = xi**2 - xi**alpha_mid
    below = np.nonzero(curve[1:] <= lo[1:])[0]
    u_hat = h * (below[0] + 1) if below.size else u_max
    omega = float(lo[min(int(round(u_hat / h)), m)])
    # the null is sampled at the experiment's time step, so its curve decays
    # like exp(-2 dt c eta u^alpha); dt must enter the matched scale
    eta_hat = -math.log(omega) / (2 * dt * c * u_hat**alpha_mid)
    return float(eta_hat), float(u_hat)


def pilot_null_scale_cf(cf: CFEstimate, plan: LadderPlan,
                        alpha_mid: float = 1.0, dt: float = 1.0) -> tuple[float, float]:
    """pilot_null_scale for a calibrated cf curve instead of increments."""
    grid = cf.grid
    p = np.abs(cf.values) ** 2
    if plan.xi is not None:
        xi = plan.xi
        pj = np.abs(cf.at(np.minimum(xi * grid, grid[-1]))) ** 2
        curve = np.where(pj > 0, p ** (xi**2) / np.where(pj > 0, pj, 1.0), 0.0)
        c = xi**2 - xi**alpha_mid
    else:
        curve = p
        c = 1.0
    lo, _ = plan.levels.resolve(grid)
    pos = grid > 0
    below = np.nonzero(curve[pos] <= lo[pos])[0]
    u_hat = grid[pos][below[0]] if below.size else float(grid[-1])
    omega = float(lo[pos][below[0]] if below.size else lo[-1])
    eta_hat = -math.log(omega) / (2 * dt * c * u_hat**alpha_mid)
    return float(eta_hat), float(u_hat)


def simulate_null_statistics(null_model: ModelSpec, n: int, dt: float,
                             plan: LadderPlan, M: int, seed: int
                             ) -> tuple[np.ndarray, np.ndarray]:
    """M independent replications of the ladder statistics under the null
    model; rows are replications, columns rungs."""
    alphas = np.empty((M, plan.K))
    variances = np.empty((M, plan.K))
    for i in range(M):
        s = sample_increments(null_model, dt, n, derive_seed(seed, i))
        alphas[i], variances[i] = ladder_statistics_from_sample(
            s.values, 1.0 / n, plan)
    return alphas, variances
