"""Likelihood-ratio tests of linear autoregression against two-regime mixture autoregressions."""

__version__ = "0.1.0"

from regime_lr.armle import ArFit, ar_conditional_loglik, fit_ar  # noqa: E402
from regime_lr.cone import ConePoint, cone_infimum  # noqa: E402
from regime_lr.errors import InputError, NumericalError, RegimeLRError  # noqa: E402
from regime_lr.estimation import AlphaGrid, FitResult, fit_mixture_fixed_alpha, profile_alpha  # noqa: E402
from regime_lr.lrtest import LrTestReport, lr_statistic, p_value, run_test, simulate_null_distribution  # noqa: E402
from regime_lr.mixture import Family, MixtureParams, MixtureSpec, mixture_loglik, simulate_mixture  # noqa: E402
from regime_lr.scores import ScorePanel, build_score_panel, info_matrix  # noqa: E402
from regime_lr.timeseries import ArParams, ar_moments, simulate_ar  # noqa: E402

__all__ = [
    "__version__",
    "AlphaGrid",
    "ArFit",
    "ArParams",
    "ConePoint",
    "Family",
    "FitResult",
    "InputError",
    "LrTestReport",
    "MixtureParams",
    "MixtureSpec",
    "NumericalError",
    "RegimeLRError",
    "ScorePanel",
    "ar_conditional_loglik",
    "ar_moments",
    "build_score_panel",
    "cone_infimum",
    "fit_ar",
    "fit_mixture_fixed_alpha",
    "info_matrix",
    "lr_statistic",
    "mixture_loglik",
    "p_value",
    "profile_alpha",
    "run_test",
    "simulate_ar",
    "simulate_mixture",
    "simulate_null_distribution",
]
