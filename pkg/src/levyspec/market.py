"""Option transform pricing and synthetic quote generation.

Normalized prices are kept as the single function

    O_T(y) = C(y, T)/S  for y >= 0,     P(y, T)/S  for y < 0,

with y the negative log-forward moneyness log(K/S) - rT.  Its Fourier
transform ties directly to the risk-neutral cf of the log-price move Y_T:

    F[O_T](v) = (1 - phi_T(v - i)) / (v (v - i)),    F[g](v) = int e^{ivy} g(y) dy.

Pricing inverts this identity.  To keep the inversion window small the 1/v^2
tail is removed with a Black-Scholes control model: O_T = O_BS + F^{-1}[D]
where D(v) = (phi_BS(v-i) - phi_T(v-i)) / (v(v-i)) decays like the cfs.  The
removable v = 0 singularity (both numerators vanish there by the martingale
property) is filled by a second-order Taylor limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.stats import norm

from .models import ModelSpec, char_exponent_cont

DESIGN_VARIANCE = 1.0 / 3.0  # moneyness design: centered normal, variance 1/3


class MartingaleError(ValueError):
    """The Q-model does not satisfy E e^{Y_T} = 1."""


@dataclass(frozen=True)
class MarketConfig:
    """Synthetic option-market setup: spot, rate, maturity, quote count and the
    noise model sigma(y) = (sigma_bar * O_T(y))^2 ("squared", the documented
    default) or sigma_bar * O_T(y) ("proportional")."""

    n_quotes: int
    sigma_bar: float
    seed: int
    spot: float = 1.0
    rate: float = 0.06
    maturity: float = 0.25
    noise_form: str = "squared"

    def __post_init__(self):
        if self.spot <= 0 or self.maturity <= 0:
            raise ValueError("need spot > 0 and maturity > 0")
        if self.n_quotes < 2:
            raise ValueError("need at least 2 quotes")
        if self.sigma_bar < 0:
            raise ValueError("sigma_bar must be >= 0")
        if self.noise_form not in ("squared", "proportional"):
            raise ValueError("noise_form must be 'squared' or 'proportional'")


@dataclass
class OptionQuoteSet:
    """Moneyness design, clean and noisy normalized prices, noise scales and
    design spacings delta_j = y_j - y_{j-1} (y_0 is the extra left design
    point anchoring delta_1).  `weighted` marks exponential damping applied.
    """

    y: np.ndarray
    clean: np.ndarray
    noisy: np.ndarray
    sigma: np.ndarray
    deltas: np.ndarray
    y0: float
    seed: int
    weighted: bool = False

    def __post_init__(self):
        n = self.y.size
        for arr in (self.clean, self.noisy, self.sigma, self.deltas):
            if arr.shape != (n,):
                raise ValueError("quote arrays must share one length")
        if np.any(np.diff(self.y) <= 0):
            raise ValueError("moneyness grid must be strictly increasing")

    @property
    def n(self) -> int:
        return int(self.y.size)

    def noise_level(self) -> float:
        """eps = ||delta||^2 + sum delta_j^2 sigma~^2(y_j), the combined
        interpolation and statistical error level of the cf calibration."""
        sig_t = self.sigma if self.weighted else np.exp(-self.y) * self.sigma
        d2 = self.deltas**2
        return float(d2.sum() + (d2 * sig_t**2).sum())

    def to_csv(self) -> str:
        lines = [f"# y0={float(self.y0)!r} seed={self.seed} weighted={int(self.weighted)}",
                 "y,clean,noisy,sigma,delta"]
        for row in zip(self.y, self.clean, self.noisy, self.sigma, self.deltas):
            lines.append(",".join(repr(float(x)) for x in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "OptionQuoteSet":
        lines = text.strip().splitlines()
        meta = dict(kv.split("=") for kv in lines[0].lstrip("# ").split())
        data = np.array([[float(x) for x in ln.split(",")] for ln in lines[2:]])
        return cls(y=data[:, 0], clean=data[:, 1], noisy=data[:, 2],
                   sigma=data[:, 3], deltas=data[:, 4], y0=float(meta["y0"]),
                   seed=int(meta["seed"]), weighted=bool(int(meta["weighted"])))


# ---------------------------------------------------------------------------
# pricing
# ---------------------------------------------------------------------------

def _bs_O(y, s: float) -> np.ndarray:
    """Normalized Black-Scholes O_T for Y_T ~ N(-s^2/2, s^2).  The discounted
    strike leg is formed as exp(y + logcdf) so deep wings neither overflow
    nor lose the decay."""
    y = np.asarray(y, dtype=float)
    d1 = (-y + s**2 / 2) / s
    d2 = d1 - s
    call = norm.cdf(d1) - np.exp(y + norm.logcdf(d2))
    out = np.array(call, dtype=float)
    neg = y < 0
    out[neg] = call[neg] - (1 - np.exp(y[neg]))
    return np.clip(out, 0.0, None) if out.ndim else out


def _phi_T_shifted(model: ModelSpec, T: float, v: np.ndarray) -> np.ndarray:
    """phi_T(v - i) through the analytically continued exponent."""
    return np.exp(T * char_exponent_cont(model, v - 1j))


_PRICE_CACHE: dict = {}


def _price_table(model_q: ModelSpec, T: float, m_exp: int = 17):
    """Dense O_T table on a uniform y-grid, cached per (model, T)."""
    key = (model_q, round(float(T), 12), m_exp)
    if key in _PRICE_CACHE:
        return _PRICE_CACHE[key]
    res = float(np.real(char_exponent_cont(model_q, -1j)))
    if abs(np.exp(T * res) - 1) > 1e-8:
        raise MartingaleError(
            f"|phi_T(-i) - 1| = {abs(math.exp(T * res) - 1):.2e} > 1e-8; "
            "risk-neutralize the model first")
    # control-model volatility from the exponent curvature at 0
    h = 1e-4
    c2 = -np.real(char_exponent_cont(model_q, np.array([h]))[0]
                  + char_exponent_cont(model_q, np.array([-h]))[0]) / h**2
    s = math.sqrt(max(float(c2), 1e-4) * T)
    # frequency window: difference numerator below 1e-12 relative to 1/v^2
    V = 256.0
    for _ in range(20):
        d_edge = abs(complex(_phi_T_shifted(model_q, T, np.array([V]))[0])
                     - complex(np.exp(T * _bs_exponent_shifted(s / math.sqrt(T), V))))
        if d_edge / (V * math.hypot(V, 1.0)) < 1e-12:
            break
        V *= 2
    else:
        raise RuntimeError("pricing window did not stabilize")
    M = 2**m_exp
    j = np.arange(M)
    dv = 2 * V / M
    v = (j - M / 2) * dv
    phi_mod = _phi_T_shifted(model_q, T, v)
    phi_bs = np.exp(T * _bs_exponent_shifted(s / math.sqrt(T), v))
    num = phi_bs - phi_mod
    denom = v * (v - 1j)
    centre = M // 2  # v = 0: removable, second-order Taylor limit
    F = np.empty(M, dtype=complex)
    nz = np.ones(M, dtype=bool)
    nz[centre] = False
    F[nz] = num[nz] / denom[nz]
    d1 = (num[centre + 1] - num[centre - 1]) / (2 * dv)
    d2n = (num[centre + 1] - 2 * num[centre] + num[centre - 1]) / dv**2
    F[centre] = (d1 + 0.5 * d2n * 0.0) / (0.0 - 1j)  # lim num/(v(v-i)) at v=0
    # inverse transform on the conjugate y-grid
    dy = 2 * np.pi / (M * dv)
    y0 = -dy * M / 2
    y = y0 + dy * j
    g = F * np.exp(-1j * v * y0)
    o_diff = (dv / (2 * np.pi)) * np.real((-1.0) ** j * np.fft.fft(g))
    o = _bs_O(y, s) + o_diff
    if o.min() < -1e-8:
        raise RuntimeError(f"pricing produced negative values below tolerance: {o.min():.2e}")
    o = np.clip(o, 0.0, None)
    # interpolate the parity-smoothed call leg C = O + (1 - e^y) 1{y<0}; O
    # itself has a derivative kink at y = 0 that a cubic interpolant smears
    call_leg = o.copy()
    neg = y < 0
    call_leg[neg] += 1 - np.exp(y[neg])
    table = (y, o, CubicSpline(y, call_leg))
    _PRICE_CACHE[key] = table
    return table


def _bs_exponent_shifted(sigma: float, v) -> np.ndarray:
    """psi_BS(v - i) for the martingale Black-Scholes exponent
    psi(u) = -i sigma^2 u / 2 - sigma^2 u^2 / 2."""
    z = np.asarray(v, dtype=complex) - 1j
    return -1j * sigma**2 / 2 * z - sigma**2 / 2 * z**2


def price_OT(model_q: ModelSpec, T: float, y_grid) -> np.ndarray:
    """Clean normalized option prices O_T at the requested moneynesses.

    Requires a risk-neutral model (martingale check at 1e-8).  Prices decay
    to zero in both wings; values are clipped at 0 after an absolute
    -1e-8 negativity check.
    """
    y_grid = np.asarray(y_grid, dtype=float)
    y, o, call_interp = _price_table(model_q, T)
    if y_grid.size and (y_grid.min() < y[0] or y_grid.max() > y[-1]):
        raise ValueError("requested moneyness outside the pricing window")
    out = np.asarray(call_interp(y_grid), dtype=float)
    neg = y_grid < 0
    out[neg] -= 1 - np.exp(y_grid[neg])
    return np.clip(out, 0.0, None)


def parity_split(O_values, y_grid, spot: float = 1.0):
    """Recover call and put legs from O via put-call parity
    C - P = S (1 - e^y)."""
    o = np.asarray(O_values, dtype=float)
    y = np.asarray(y_grid, dtype=float)
    gap = spot * (1 - np.exp(y))
    call = np.where(y >= 0, spot * o, spot * o + gap)
    put = call - gap
    return call, put


def synthesize_quotes(config: MarketConfig, model_q: ModelSpec) -> OptionQuoteSet:
    """Draw the moneyness design (iid centered normal, variance 1/3, sorted),
    price the clean curve and add heteroscedastic Gaussian noise."""
    rng = np.random.default_rng(config.seed)
    y_all = np.sort(rng.normal(0.0, math.sqrt(DESIGN_VARIANCE), config.n_quotes + 1))
    # nudge ties apart (measure-zero event, but keep the design strictly sorted)
    for i in range(1, y_all.size):
        if y_all[i] <= y_all[i - 1]:
            y_all[i] = y_all[i - 1] + 1e-12
    y = y_all[1:]
    clean = price_OT(model_q, config.maturity, y)
    if config.noise_form == "squared":
        sigma = (config.sigma_bar * clean) ** 2
    else:
        sigma = config.sigma_bar * clean
    noisy = clean + sigma * rng.standard_normal(y.size)
    return OptionQuoteSet(y=y, clean=clean, noisy=noisy, sigma=sigma,
                          deltas=np.diff(y_all), y0=float(y_all[0]),
                          seed=config.seed, weighted=False)


def exp_weight(quotes: OptionQuoteSet) -> OptionQuoteSet:
    """Exponential damping O~ = e^{-y} O applied to clean, noisy and sigma."""
    if quotes.weighted:
        raise ValueError("quotes already exponentially weighted")
    w = np.exp(-quotes.y)
    return OptionQuoteSet(y=quotes.y.copy(), clean=w * quotes.clean,
                          noisy=w * quotes.noisy, sigma=w * quotes.sigma,
                          deltas=quotes.deltas.copy(), y0=quotes.y0,
                          seed=quotes.seed, weighted=True)


def unweight(quotes: OptionQuoteSet) -> OptionQuoteSet:
    """Inverse of exp_weight."""
    if not quotes.weighted:
        raise ValueError("quotes are not weighted")
    w = np.exp(quotes.y)
    return OptionQuoteSet(y=quotes.y.copy(), clean=w * quotes.clean,
                          noisy=w * quotes.noisy, sigma=w * quotes.sigma,
                          deltas=quotes.deltas.copy(), y0=quotes.y0,
                          seed=quotes.seed, weighted=False)
