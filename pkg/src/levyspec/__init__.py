"""Spectral cut-off estimation of the fractional order of a Levy process."""

__version__ = "0.1.0"

from .models import (  # noqa: F401
    FAMILIES,
    GH,
    STABLE,
    STABLE_DIFF,
    GridError,
    IncrementSample,
    ModelError,
    ModelSpec,
    NotContinuableError,
    QuadratureError,
    RLEClassSpec,
    bessel_k,
    cf_at,
    char_exponent,
    char_exponent_cont,
    density_on_grid,
    risk_neutralize,
    sample_increments,
    true_fractional_order,
)
from .ecf import CFEstimate, cov_kernel_S, empirical_cf, finite_n_cov, mean_delta  # noqa: F401
from .market import (  # noqa: F401
    MarketConfig,
    OptionQuoteSet,
    exp_weight,
    parity_split,
    price_OT,
    synthesize_quotes,
)
from .calibration import (  # noqa: F401
    ExponentCurve,
    SplineFit,
    cf_from_exponent,
    direct_cf_Q,
    exponent_from_transform,
    fourier_of_fit,
    gcv_select,
    spline_fit,
)
from .spectral import (  # noqa: F401
    SpectralCurve,
    TruncationLevels,
    WeightSpec,
    bias_RU,
    build_weight,
    estimate_alpha,
    estimate_alpha_xi,
    lemma61_residual,
    oracle_levels,
    rho_xi,
    theoretical_cutoff,
    truncate,
    variance_sigma,
    y_curve,
    zeta_coefficients,
)
from .adaptive import (  # noqa: F401
    AggregationTrace,
    CriticalValues,
    CutoffLadder,
    aggregate,
    calibrate_critical_values,
    default_ladder,
    triangle_kernel,
)
from .harness import ExperimentConfig, TrialRecord, load_config, run  # noqa: F401
