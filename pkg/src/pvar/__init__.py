"""Periodic VAR estimation and portmanteau diagnostics under weak innovations."""

__version__ = "0.1.0"

from .diagnostics import asymptotic_cov, diagnose, lag_covariances, portmanteau
from .estimate import fit, fit_constrained, fit_ols, standard_errors
from .estimator import PeriodicVAR
from .lrv import LrvConfig, hac_lrv, long_run_variance, var_spectral_lrv
from .model import (
    NoiseKind,
    PvarModel,
    PvarSpec,
    SeriesData,
    companion_form,
    forecast,
    is_causal,
    ma_infinity,
    simulate,
)
from .quadform import WeightedChiSq, mc_survival, survival

__all__ = [
    "LrvConfig", "NoiseKind", "PeriodicVAR", "PvarModel", "PvarSpec", "SeriesData", "WeightedChiSq",
    "asymptotic_cov", "companion_form", "diagnose", "fit", "fit_constrained", "fit_ols", "forecast",
    "hac_lrv", "is_causal", "lag_covariances", "long_run_variance", "ma_infinity", "mc_survival",
    "portmanteau", "simulate", "standard_errors", "survival", "var_spectral_lrv",
]
