"""Stagewise aggregation of the cutoff ladder.

Estimates alpha~_1 .. alpha~_K are computed on a decreasing ladder
U_1 > ... > U_K (large cutoffs: low model bias, exploding variance; small
cutoffs: the reverse).  The aggregate walks the ladder:

    alpha^_1 = alpha~_1
    T_k      = (alpha~_k - alpha^_{k-1})^2 / var_k
    gamma_k  = Kernel(T_k / V_k)
    alpha^_k = gamma_k alpha~_k + (1 - gamma_k) alpha^_{k-1}

with Kernel supported on [0, 1], so a rung statistically far from the running
estimate (T_k >= V_k) is rejected outright.  The critical values V_2..V_K are
calibrated under a null model where every rung targets the same alpha: the
smallest values on a geometric grid keeping the Monte Carlo moment

    E | (alpha^_k - alpha~_k)^2 / var_k |^r  <=  gamma_conf * E|xi|^{2r}

at every rung (xi standard normal).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .engine import LadderPlan, simulate_null_statistics
from .models import STABLE, ModelSpec


class CalibrationError(RuntimeError):
    """No critical value on the search grid satisfies the moment constraint."""


@dataclass(frozen=True)
class CutoffLadder:
    cutoffs: tuple

    def __post_init__(self):
        u = np.asarray(self.cutoffs, dtype=float)
        if u.size < 2 or np.any(np.diff(u) >= 0) or np.any(u <= 0):
            raise ValueError("cutoffs must be strictly decreasing and positive")
        object.__setattr__(self, "cutoffs", tuple(float(x) for x in u))

    @property
    def K(self) -> int:
        return len(self.cutoffs)


def default_ladder() -> CutoffLadder:
    """K = 30 rungs, U_k = 100 * 1.25^{-(k-1)}."""
    return CutoffLadder(tuple(100.0 * 1.25 ** (-k) for k in range(30)))


def triangle_kernel(x):
    """(1 - x) on [0, 1], zero elsewhere."""
    x = np.asarray(x, dtype=float)
    out = np.where((x >= 0) & (x <= 1), 1.0 - x, 0.0)
    return out if out.ndim else float(out)


def normal_moment(r: float) -> float:
    """C_r = E |xi|^{2r} for standard normal xi (equals 1 at r = 1)."""
    return 2.0**r * math.gamma(r + 0.5) / math.sqrt(math.pi)


@dataclass(frozen=True)
class CriticalValues:
    """Calibrated thresholds V_2..V_K with the calibration's provenance."""

    values: tuple
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if any(v <= 0 for v in self.values):
            raise ValueError("critical values must be positive")

    def to_json(self) -> str:
        return json.dumps({"values": list(self.values), "metadata": self.metadata},
                          indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CriticalValues":
        doc = json.loads(text)
        return cls(values=tuple(doc["values"]), metadata=doc["metadata"])


@dataclass
class AggregationTrace:
    """Per-rung record of one aggregation run."""

    cutoffs: np.ndarray
    alpha_tilde: np.ndarray
    sigma2: np.ndarray
    T: np.ndarray
    gamma: np.ndarray
    alpha_hat: np.ndarray

    def __post_init__(self):
        if not (self.alpha_hat[0] == self.alpha_tilde[0]):
            raise ValueError("trace must start at alpha^_1 = alpha~_1")
        if np.any((self.gamma < 0) | (self.gamma > 1)):
            raise ValueError("gamma outside [0, 1]")

    @property
    def final(self) -> float:
        return float(self.alpha_hat[-1])

    def to_csv(self) -> str:
        lines = ["k,U,alpha_tilde,sigma2,T,gamma,alpha_hat"]
        for k in range(self.cutoffs.size):
            row = (k + 1, self.cutoffs[k], self.alpha_tilde[k], self.sigma2[k],
                   self.T[k], self.gamma[k], self.alpha_hat[k])
            lines.append(",".join(repr(float(x)) if i else str(x)
                                  for i, x in enumerate(row)))
        return "\n".join(lines) + "\n"


def aggregate(alphas, sigmas, critical: CriticalValues, kernel=triangle_kernel,
              cutoffs=None) -> AggregationTrace:
    """Run the stagewise recursion; `sigmas` are the variances of the rung
    estimates (must be positive) and `critical` holds V_2..V_K."""
    a = np.asarray(alphas, dtype=float)
    s = np.asarray(sigmas, dtype=float)
    if a.shape != s.shape or a.ndim != 1:
        raise ValueError("alphas and sigmas must be equal-length vectors")
    if np.any(s <= 0):
        raise ValueError("rung variances must be positive")
    v = np.asarray(critical.values, dtype=float)
    if v.size != a.size - 1:
        raise ValueError(f"need {a.size - 1} critical values, got {v.size}")
    K = a.size
    T = np.zeros(K)
    gam = np.ones(K)
    ahat = np.empty(K)
    ahat[0] = a[0]
    for k in range(1, K):
        T[k] = (a[k] - ahat[k - 1]) ** 2 / s[k]
        gam[k] = float(kernel(T[k] / v[k - 1]))
        ahat[k] = gam[k] * a[k] + (1 - gam[k]) * ahat[k - 1]
    cut = np.arange(K, 0, -1, dtype=float) if cutoffs is None else np.asarray(cutoffs, float)
    return AggregationTrace(cutoffs=cut, alpha_tilde=a, sigma2=s, T=T,
                            gamma=gam, alpha_hat=ahat)


def _aggregate_matrix(alphas, sigmas, v_values, kernel):
    """Vectorized recursion over replications (rows)."""
    M, K = alphas.shape
    ahat = alphas[:, 0].copy()
    out = np.empty((M, K))
    out[:, 0] = ahat
    for k in range(1, K):
        T = (alphas[:, k] - ahat) ** 2 / sigmas[:, k]
        gam = kernel(T / v_values[k - 1])
        ahat = gam * alphas[:, k] + (1 - gam) * ahat
        out[:, k] = ahat
    return out


def critical_value_grid(lo: float = 1e-2, hi: float = 1e4, factor: float = 1.2) -> np.ndarray:
    count = int(math.ceil(math.log(hi / lo) / math.log(factor)))
    grid = lo * factor ** np.arange(count + 1)
    grid[-1] = min(grid[-1], hi)
    return grid


def calibrate_critical_values(null_model: ModelSpec, ladder: CutoffLadder,
                              r: float = 1.0, gamma: float = 0.5, M: int = 500,
                              seed: int = 0, *, n: int, dt: float = 1.0,
                              plan: LadderPlan | None = None,
                              kernel=triangle_kernel) -> CriticalValues:
    """Sequential smallest-feasible search for V_2..V_K on a geometric grid,
    sharing M null replications across rungs.

    The null model must make every rung target the same value, which holds
    exactly for a symmetric stable law (no nuisance correction); `n` sets the
    noise level of the replications.
    """
    if null_model.family != STABLE:
        raise ValueError("calibration null must be a symmetric stable model "
                         "(rung targets coincide exactly there)")
    if r <= 0 or not 0 < gamma <= 1:
        raise ValueError("need r > 0 and gamma in (0, 1]")
    if plan is None:
        plan = LadderPlan(cutoffs=ladder.cutoffs)
    elif plan.cutoffs != ladder.cutoffs:
        raise ValueError("plan cutoffs disagree with the ladder")
    alphas, variances = simulate_null_statistics(null_model, n, dt, plan, M, seed)
    bound = gamma * normal_moment(r)
    grid = critical_value_grid()
    K = ladder.K
    v_fixed: list[float] = []
    ahat = alphas[:, 0].copy()
    for k in range(1, K):
        chosen = None
        for v in grid:
            T = (alphas[:, k] - ahat) ** 2 / variances[:, k]
            gam = kernel(T / v)
            cand = gam * alphas[:, k] + (1 - gam) * ahat
            loss = float(np.mean(np.abs((cand - alphas[:, k]) ** 2 / variances[:, k]) ** r))
            if loss <= bound:
                chosen = float(v)
                ahat = cand
                break
        if chosen is None:
            raise CalibrationError(
                f"no critical value on [{grid[0]:g}, {grid[-1]:g}] satisfies the "
                f"rung-{k + 1} moment constraint")
        v_fixed.append(chosen)
    meta = {
        "null_model": {"family": null_model.family, "eta": null_model.eta,
                       "alpha": null_model.alpha, "mu": null_model.mu},
        "r": r, "gamma": gamma, "replications": M, "seed": seed,
        "n": n, "dt": dt, "ell": plan.ell, "xi": plan.xi,
        "ladder": list(ladder.cutoffs),
    }
    return CriticalValues(values=tuple(v_fixed), metadata=meta)
