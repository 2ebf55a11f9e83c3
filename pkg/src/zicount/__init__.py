"""Zero-inflated and hurdle count models: MLE, Fisher information and
bootstrap Kolmogorov-Smirnov model selection."""

from .baselines import BetaBin, BetaNegBin, NegBin, Poisson, make_baseline
from .fit import CountVector, FitOptions, FitResult, fit_model, fit_baseline, fit_hurdle, fit_zero_inflated
from .fisher import confidence_intervals, fisher_information, standard_errors
from .gof import KSReport, bootstrap_ks_pvalue, ks_statistic
from .zero_models import Kind, ZeroModifiedModel

__version__ = "0.1.0"

__all__ = [
    "BetaBin", "BetaNegBin", "NegBin", "Poisson", "make_baseline",
    "CountVector", "FitOptions", "FitResult", "fit_model", "fit_baseline", "fit_hurdle",
    "fit_zero_inflated", "confidence_intervals", "fisher_information", "standard_errors",
    "KSReport", "bootstrap_ks_pvalue", "ks_statistic", "Kind", "ZeroModifiedModel",
]
