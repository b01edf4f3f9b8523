"""Experiment orchestration: config parsing, pipelines, deterministic
replication and CSV/JSON artifacts.

A run is described by one JSON document (see README for the schema).  Every
trial derives its own RNG stream from the master seed and the trial index, so
results are bit-identical no matter how many workers execute them.

Pipelines:

  P (and the diffusion variant): sample increments -> per-rung empirical cf
  -> transformed curve -> rung estimates and variances -> stagewise
  aggregation; also records the fixed-cutoff estimate at the theoretical
  rate-optimal U for the configured smoothness class.

  Q: synthesize noisy quotes -> penalized-spline fit with GCV -> FFT of the
  damped fit -> cf estimate (direct Riemann-sum route behind a flag) -> same
  spectral/aggregation machinery with the quote noise level.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .adaptive import (
    CriticalValues,
    CutoffLadder,
    aggregate,
    calibrate_critical_values,
    default_ladder,
)
from .calibration import cf_from_transform, direct_cf_Q, fourier_of_fit, spline_fit
from .ecf import CFEstimate, ecf_on_multiples
from .engine import (
    LadderPlan,
    derive_seed,
    ladder_statistics_from_cf,
    ladder_statistics_from_sample,
    pilot_null_scale,
    rung_statistics,
)
from .market import MarketConfig, exp_weight, synthesize_quotes
from .models import (
    GH,
    STABLE,
    STABLE_DIFF,
    ModelSpec,
    RLEClassSpec,
    risk_neutralize,
    sample_increments,
    true_fractional_order,
)
from .spectral import TruncationLevels, theoretical_cutoff

MODES = ("simulate", "estimate-p", "calibrate-q", "mc-study", "calibrate-cv")

PILOT_TAG = 710071   # seed-path tag for the study pilot replication
CALIB_TAG = 0xCA11   # seed-path tag for critical-value calibration

TRIALS_COLUMNS = ("trial", "seed", "n", "sigma_bar", "family", "alpha_true",
                  "alpha_hat", "alpha_tilde_bar", "sigma2", "regime", "xi")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass
class TrialRecord:
    trial: int
    seed: int
    n: int
    sigma_bar: float | None
    family: str
    alpha_true: float
    alpha_hat: float
    alpha_tilde_bar: float
    sigma2: float
    regime: str
    xi: float | None
    runtime_ms: float = 0.0

    def csv_row(self) -> str:
        def fmt(x):
            if x is None:
                return ""
            if isinstance(x, float):
                return repr(x)
            return str(x)
        vals = (self.trial, self.seed, self.n, self.sigma_bar, self.family,
                self.alpha_true, self.alpha_hat, self.alpha_tilde_bar,
                self.sigma2, self.regime, self.xi)
        return ",".join(fmt(v) for v in vals)

    @classmethod
    def from_csv_row(cls, row: str) -> "TrialRecord":
        parts = row.split(",")
        opt = lambda s: None if s == "" else float(s)
        return cls(trial=int(parts[0]), seed=int(parts[1]), n=int(parts[2]),
                   sigma_bar=opt(parts[3]), family=parts[4],
                   alpha_true=float(parts[5]), alpha_hat=float(parts[6]),
                   alpha_tilde_bar=float(parts[7]), sigma2=float(parts[8]),
                   regime=parts[9], xi=opt(parts[10]))


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

_GH_KEYS = {"kappa", "beta", "delta", "lambda"}


def model_from_config(doc: dict) -> ModelSpec:
    kwargs = dict(family=doc["family"], mu=float(doc.get("mu", 0.0)),
                  a=float(doc.get("a", 0.0)))
    if doc["family"] in (STABLE, STABLE_DIFF):
        kwargs.update(eta=float(doc["eta"]), alpha=float(doc["alpha"]))
    else:
        kwargs.update(kappa=float(doc["kappa"]), beta=float(doc.get("beta", 0.0)),
                      delta=float(doc["delta"]), lam=float(doc.get("lambda", 0.0)))
    return ModelSpec(**kwargs)


def model_to_config(model: ModelSpec) -> dict:
    doc = {"family": model.family, "mu": model.mu, "a": model.a}
    if model.family in (STABLE, STABLE_DIFF):
        doc.update(eta=model.eta, alpha=model.alpha)
    else:
        doc.update(kappa=model.kappa, beta=model.beta, delta=model.delta)
        doc["lambda"] = model.lam
    return doc


@dataclass
class ExperimentConfig:
    mode: str
    model: ModelSpec
    seed: int = 0
    trials: int = 1
    n: int = 10_000
    n_grid: tuple = ()
    dt: float = 1.0
    regime: str = "P"
    xi: float | None = None
    ell: float = 0.1
    omega_minus: float = 0.01
    omega_plus: float = 0.95
    ladder: CutoffLadder = field(default_factory=default_ladder)
    rle_class: RLEClassSpec | None = None
    market: MarketConfig | None = None
    sigma_bar_grid: tuple = ()
    route: str = "spline"
    cv_r: float = 1.0
    cv_gamma: float = 0.5
    cv_m: int = 500
    alpha_mid: float = 1.0
    threads: int = 1
    out: str = "levyspec-out"
    raw: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.n < 1 or self.trials < 0:
            raise ConfigError("need n >= 1 and trials >= 0")
        if self.regime not in ("P", "Q", "diffusion"):
            raise ConfigError("regime must be P, Q or diffusion")
        if self.regime == "diffusion" and self.xi is None:
            raise ConfigError("diffusion regime requires xi > 1")
        if self.mode in ("calibrate-q",) or self.regime == "Q":
            if self.market is None:
                raise ConfigError("Q-mode configs need a market section")
        if self.route not in ("spline", "direct"):
            raise ConfigError("route must be 'spline' or 'direct'")

    @property
    def levels(self) -> TruncationLevels:
        return TruncationLevels(self.omega_minus, self.omega_plus)

    def plan(self) -> LadderPlan:
        return LadderPlan(cutoffs=self.ladder.cutoffs, ell=self.ell,
                          levels=self.levels, xi=self.xi)


def load_config(doc: dict) -> ExperimentConfig:
    doc = dict(doc)
    try:
        model = model_from_config(doc["model"])
    except KeyError as exc:
        raise ConfigError(f"model section missing field {exc}") from exc
    ladder_doc = doc.get("ladder")
    if ladder_doc is None:
        ladder = default_ladder()
    elif "cutoffs" in ladder_doc:
        ladder = CutoffLadder(tuple(float(x) for x in ladder_doc["cutoffs"]))
    else:
        k = int(ladder_doc.get("K", 30))
        u1 = float(ladder_doc.get("u1", 100.0))
        fac = float(ladder_doc.get("factor", 1.25))
        ladder = CutoffLadder(tuple(u1 * fac ** (-j) for j in range(k)))
    cls_doc = doc.get("class")
    rle = None
    if cls_doc is not None:
        rle = RLEClassSpec(alpha_bar=float(cls_doc.get("alpha_bar", 2.0)),
                           eta_minus=float(cls_doc.get("eta_minus", 0.1)),
                           eta_plus=float(cls_doc.get("eta_plus", 1.0)),
                           varkappa=float(cls_doc.get("varkappa", 1.0)),
                           a_bar=float(cls_doc.get("a_bar", 0.0)))
    market_doc = doc.get("market")
    market = None
    if market_doc is not None:
        market = MarketConfig(
            n_quotes=int(market_doc["n_quotes"]),
            sigma_bar=float(market_doc.get("sigma_bar", 0.0)),
            seed=0,
            spot=float(market_doc.get("spot", 1.0)),
            rate=float(market_doc.get("rate", 0.06)),
            maturity=float(market_doc.get("maturity", 0.25)),
            noise_form=market_doc.get("noise_form", "squared"))
    lev = doc.get("levels", {})
    wgt = doc.get("weight", {})
    cv = doc.get("cv", {})
    return ExperimentConfig(
        mode=doc["mode"], model=model, seed=int(doc.get("seed", 0)),
        trials=int(doc.get("trials", 1)), n=int(doc.get("n", 10_000)),
        n_grid=tuple(int(x) for x in doc.get("n_grid", ())),
        dt=float(doc.get("dt", 1.0)), regime=doc.get("regime", "P"),
        xi=(None if doc.get("xi") is None else float(doc["xi"])),
        ell=float(wgt.get("ell", 0.1)),
        omega_minus=float(lev.get("omega_minus", 0.01)),
        omega_plus=float(lev.get("omega_plus", 0.95)),
        ladder=ladder, rle_class=rle, market=market,
        sigma_bar_grid=tuple(float(x) for x in doc.get("sigma_bar_grid", ())),
        route=doc.get("route", "spline"),
        cv_r=float(cv.get("r", 1.0)), cv_gamma=float(cv.get("gamma", 0.5)),
        cv_m=int(cv.get("M", 500)), alpha_mid=float(cv.get("alpha_mid", 1.0)),
        threads=int(doc.get("threads", 1)), out=doc.get("out", "levyspec-out"),
        raw=doc)


def load_config_file(path) -> ExperimentConfig:
    with open(path) as fh:
        return load_config(json.load(fh))


# ---------------------------------------------------------------------------
# pipelines
# ---------------------------------------------------------------------------

def _theoretical_estimate(cfg: ExperimentConfig, est_builder, eps: float):
    """(alpha~ at the rate-optimal cutoff, its variance) via a dedicated grid."""
    if cfg.rle_class is None:
        return math.nan, math.nan
    regime = "diffusion" if cfg.xi is not None else cfg.regime
    u_bar = theoretical_cutoff(eps, cfg.rle_class, regime)
    plan = cfg.plan()
    est = est_builder(u_bar)
    return rung_statistics(est, u_bar, plan)


def _null_for(cfg: ExperimentConfig, pilot_values: np.ndarray) -> ModelSpec:
    plan = cfg.plan()
    eta_hat, _ = pilot_null_scale(pilot_values, plan, alpha_mid=cfg.alpha_mid, dt=cfg.dt)
    return ModelSpec(family=STABLE, eta=eta_hat, alpha=cfg.alpha_mid)


def calibrate_for_study(cfg: ExperimentConfig, n: int, pilot_values: np.ndarray,
                        n_null: int | None = None) -> CriticalValues:
    null = _null_for(cfg, pilot_values)
    return calibrate_critical_values(
        null, cfg.ladder, r=cfg.cv_r, gamma=cfg.cv_gamma, M=cfg.cv_m,
        seed=derive_seed(cfg.seed, CALIB_TAG), n=(n_null or n), dt=cfg.dt,
        plan=cfg.plan())


def pipeline_p(cfg: ExperimentConfig, trial: int, n: int,
               critical: CriticalValues) -> TrialRecord:
    t0 = time.perf_counter()
    seed = derive_seed(cfg.seed, 1, trial)
    sample = sample_increments(cfg.model, cfg.dt, n, seed)
    plan = cfg.plan()
    alphas, variances = ladder_statistics_from_sample(sample.values, 1.0 / n, plan)
    trace = aggregate(alphas, variances, critical,
                      cutoffs=np.asarray(cfg.ladder.cutoffs))
    eps = 1.0 / n

    def est_builder(u_bar):
        h, m = plan.rung_multiples(u_bar)
        vals = ecf_on_multiples(sample.values, h, m)
        return CFEstimate(grid=h * np.arange(m + 1), values=vals, eps=eps)

    alpha_bar, sigma2_bar = _theoretical_estimate(cfg, est_builder, eps)
    return TrialRecord(
        trial=trial, seed=seed, n=n, sigma_bar=None, family=cfg.model.family,
        alpha_true=true_fractional_order(cfg.model), alpha_hat=trace.final,
        alpha_tilde_bar=alpha_bar, sigma2=sigma2_bar,
        regime="diffusion" if cfg.xi is not None else "P", xi=cfg.xi,
        runtime_ms=(time.perf_counter() - t0) * 1e3)


def quote_cf(cfg: ExperimentConfig, market: MarketConfig, model_q: ModelSpec) -> CFEstimate:
    quotes = synthesize_quotes(market, model_q)
    if cfg.route == "direct":
        wq = exp_weight(quotes)
        plan = cfg.plan()
        reach = max(2.0, cfg.xi or 0.0)
        u_top = max(cfg.ladder.cutoffs)
        # pad past the largest rung's reach so snapped u + v lookups stay inside
        h = min(cfg.ladder.cutoffs) / plan.n_div
        m = int(math.ceil((reach * u_top + 4 * u_top / plan.n_div) / h))
        return direct_cf_Q(wq, h * np.arange(m + 1))
    fit = spline_fit(quotes, L=None)
    v, F = fourier_of_fit(fit)
    return cf_from_transform(F, v, eps=quotes.noise_level())


def pipeline_q(cfg: ExperimentConfig, trial: int, sigma_bar: float,
               critical: CriticalValues, model_q: ModelSpec) -> TrialRecord:
    t0 = time.perf_counter()
    seed = derive_seed(cfg.seed, 2, trial)
    market = MarketConfig(n_quotes=cfg.market.n_quotes, sigma_bar=sigma_bar,
                          seed=seed, spot=cfg.market.spot, rate=cfg.market.rate,
                          maturity=cfg.market.maturity,
                          noise_form=cfg.market.noise_form)
    cf = quote_cf(cfg, market, model_q)
    plan = cfg.plan()
    alphas, variances = ladder_statistics_from_cf(cf, plan)
    trace = aggregate(alphas, variances, critical,
                      cutoffs=np.asarray(cfg.ladder.cutoffs))

    def est_builder(u_bar):
        h, m = plan.rung_multiples(u_bar)
        dv = cf.grid[1] - cf.grid[0]
        r = max(1, int(round(h / dv)))
        grid = (r * dv) * np.arange(int(math.ceil(m * h / (r * dv))) + 1)
        return CFEstimate(grid=grid, values=cf.at(grid), eps=cf.eps, measure_tag="Q")

    alpha_bar, sigma2_bar = _theoretical_estimate(cfg, est_builder, cf.eps)
    return TrialRecord(
        trial=trial, seed=seed, n=market.n_quotes, sigma_bar=sigma_bar,
        family=cfg.model.family, alpha_true=true_fractional_order(cfg.model),
        alpha_hat=trace.final, alpha_tilde_bar=alpha_bar, sigma2=sigma2_bar,
        regime="Q", xi=cfg.xi, runtime_ms=(time.perf_counter() - t0) * 1e3)


# ---------------------------------------------------------------------------
# run orchestration
# ---------------------------------------------------------------------------

def _study_jobs(cfg: ExperimentConfig):
    """(label_value, n_or_sigma) pairs the study iterates over."""
    if cfg.regime == "Q":
        grid = cfg.sigma_bar_grid or ((cfg.market.sigma_bar,) if cfg.market else (0.0,))
        return [("sigma_bar", s) for s in grid]
    grid = cfg.n_grid or (cfg.n,)
    return [("n", n) for n in grid]


def _run_p_study(cfg: ExperimentConfig, n: int) -> list[TrialRecord]:
    pilot = sample_increments(cfg.model, cfg.dt, n, derive_seed(cfg.seed, PILOT_TAG))
    critical = calibrate_for_study(cfg, n, pilot.values)
    worker = _PTrial(cfg, n, critical)
    return _map_trials(worker, cfg)


class _PTrial:
    def __init__(self, cfg, n, critical):
        self.cfg, self.n, self.critical = cfg, n, critical

    def __call__(self, trial: int) -> TrialRecord:
        return pipeline_p(self.cfg, trial, self.n, self.critical)


class _QTrial:
    def __init__(self, cfg, sigma_bar, critical, model_q):
        self.cfg, self.sigma_bar = cfg, sigma_bar
        self.critical, self.model_q = critical, model_q

    def __call__(self, trial: int) -> TrialRecord:
        return pipeline_q(self.cfg, trial, self.sigma_bar, self.critical, self.model_q)


def _map_trials(worker, cfg: ExperimentConfig) -> list[TrialRecord]:
    idx = range(cfg.trials)
    if cfg.threads > 1 and cfg.trials > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            return list(pool.map(worker, idx))
    return [worker(i) for i in idx]


def _run_q_study(cfg: ExperimentConfig, sigma_bar: float) -> list[TrialRecord]:
    model_q = risk_neutralize(cfg.model)
    pilot_market = MarketConfig(n_quotes=cfg.market.n_quotes, sigma_bar=sigma_bar,
                                seed=derive_seed(cfg.seed, PILOT_TAG),
                                spot=cfg.market.spot, rate=cfg.market.rate,
                                maturity=cfg.market.maturity,
                                noise_form=cfg.market.noise_form)
    pilot_cf = quote_cf(cfg, pilot_market, model_q)
    n_null = int(round(1.0 / pilot_cf.eps))
    n_null = min(max(n_null, 100), 200_000)
    critical = _calibrate_from_cf(cfg, pilot_cf, n_null)
    worker = _QTrial(cfg, sigma_bar, critical, model_q)
    return _map_trials(worker, cfg)


def _calibrate_from_cf(cfg: ExperimentConfig, pilot_cf: CFEstimate, n_null: int):
    from .engine import pilot_null_scale_cf

    eta_hat, _ = pilot_null_scale_cf(pilot_cf, cfg.plan(), alpha_mid=cfg.alpha_mid, dt=cfg.dt)
    null = ModelSpec(family=STABLE, eta=eta_hat, alpha=cfg.alpha_mid)
    return calibrate_critical_values(
        null, cfg.ladder, r=cfg.cv_r, gamma=cfg.cv_gamma, M=cfg.cv_m,
        seed=derive_seed(cfg.seed, CALIB_TAG), n=n_null, dt=cfg.dt, plan=cfg.plan())


def run(cfg: ExperimentConfig, out_dir=None) -> int:
    """Execute the configured experiment; returns the process exit status."""
    out = Path(out_dir if out_dir is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        artifacts = _dispatch(cfg, out)
    except Exception as exc:  # noqa: BLE001 - converted to machine-readable artifact
        (out / "errors.json").write_text(json.dumps(
            {"error": type(exc).__name__, "message": str(exc)}, indent=2))
        return 1
    manifest = {
        "config": cfg.raw or {"mode": cfg.mode},
        "mode": cfg.mode,
        "seed": cfg.seed,
        "versions": {"levyspec": __version__, "numpy": np.__version__},
        "wall_time_s": time.perf_counter() - t0,
        "artifacts": artifacts,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return 0


def _dispatch(cfg: ExperimentConfig, out: Path) -> list[str]:
    if cfg.mode == "simulate":
        s = sample_increments(cfg.model, cfg.dt, cfg.n, derive_seed(cfg.seed, 1, 0))
        lines = ["index,value"] + [f"{i},{float(v)!r}" for i, v in enumerate(s.values)]
        (out / "increments.csv").write_text("\n".join(lines) + "\n")
        return ["increments.csv"]
    if cfg.mode == "calibrate-cv":
        if cfg.regime == "Q":
            model_q = risk_neutralize(cfg.model)
            pilot_market = MarketConfig(
                n_quotes=cfg.market.n_quotes, sigma_bar=cfg.market.sigma_bar,
                seed=derive_seed(cfg.seed, PILOT_TAG), spot=cfg.market.spot,
                rate=cfg.market.rate, maturity=cfg.market.maturity,
                noise_form=cfg.market.noise_form)
            pilot_cf = quote_cf(cfg, pilot_market, model_q)
            cv = _calibrate_from_cf(cfg, pilot_cf,
                                    min(max(int(round(1 / pilot_cf.eps)), 100), 200_000))
        else:
            pilot = sample_increments(cfg.model, cfg.dt, cfg.n,
                                      derive_seed(cfg.seed, PILOT_TAG))
            cv = calibrate_for_study(cfg, cfg.n, pilot.values)
        (out / "critical_values.json").write_text(cv.to_json())
        return ["critical_values.json"]
    # trial-producing modes
    records: list[TrialRecord] = []
    if cfg.mode in ("estimate-p",) or (cfg.mode == "mc-study" and cfg.regime != "Q"):
        for _, n in _study_jobs(cfg):
            records.extend(_run_p_study(cfg, int(n)))
    else:
        for _, s in _study_jobs(cfg):
            records.extend(_run_q_study(cfg, float(s)))
    write_trials_csv(out / "trials.csv", records)
    return ["trials.csv"]


def write_trials_csv(path: Path, records: list[TrialRecord]) -> None:
    partial = path.with_suffix(path.suffix + ".partial")
    with open(partial, "w") as fh:
        fh.write(",".join(TRIALS_COLUMNS) + "\n")
        for rec in records:
            fh.write(rec.csv_row() + "\n")
    partial.replace(path)


def read_trials_csv(path) -> list[TrialRecord]:
    lines = Path(path).read_text().strip().splitlines()
    if lines[0] != ",".join(TRIALS_COLUMNS):
        raise ConfigError(f"unexpected trials.csv header: {lines[0]}")
    return [TrialRecord.from_csv_row(ln) for ln in lines[1:]]
