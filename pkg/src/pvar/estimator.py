"""scikit-learn style front end to the functional API."""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_orders, check_series
from .diagnostics import diagnose
from .estimate import fit, standard_errors
from .lrv import LrvConfig
from .model import PvarSpec, SeriesData, forecast


class PeriodicVAR(BaseEstimator):
    """Periodic vector autoregression fitted by per-season least squares.

    Parameters:
        season_length: number of seasons s per year.
        order: one order for all seasons or a sequence of s orders.
        constraints: optional sequence of (R, b) pairs, one per season.
        demean: remove seasonal means before fitting.
        lrv: LrvConfig used for weak standard errors and weak diagnostics.

    ``fit`` takes an (n_samples, n_features) array whose rows are consecutive
    observations starting at season 1.
    """

    def __init__(self, season_length=1, order=1, constraints=None, demean=True, lrv=None):
        self.season_length = season_length
        self.order = order
        self.constraints = constraints
        self.demean = demean
        self.lrv = lrv

    def fit(self, X, y=None):
        X = check_series(X, self.season_length)
        s = self.season_length
        orders = check_orders(self.order, s)
        values = X.T
        self.mean_ = np.zeros((s, X.shape[1]))
        if self.demean:
            self.mean_ = np.stack([values[:, v::s].mean(axis=1) for v in range(s)])
            values = values - np.tile(self.mean_.T, X.shape[0] // s)
        spec = PvarSpec(s, X.shape[1], orders, self.constraints)
        self.fit_result_ = fit(SeriesData(values, s), spec)
        self.coef_ = [B.copy() for B in self.fit_result_.coef]
        self.sigma_ = [m.copy() for m in self.fit_result_.sigma_tilde]
        self.n_features_in_ = X.shape[1]
        return self

    @property
    def _lrv(self):
        return self.lrv if self.lrv is not None else LrvConfig()

    @property
    def residuals_(self):
        check_is_fitted(self, "fit_result_")
        return self.fit_result_.residuals.values.T

    def predict(self, horizon=1):
        """Forecasts for the next ``horizon`` observations, (horizon, n_features)."""
        check_is_fitted(self, "fit_result_")
        res = self.fit_result_
        paths = forecast(res.to_model(), res.data, horizon)
        s = self.season_length
        seasons = (res.data.n + np.arange(horizon)) % s
        return paths.T + self.mean_[seasons]

    def standard_errors(self, mode="strong"):
        check_is_fitted(self, "fit_result_")
        return standard_errors(self.fit_result_, mode, self._lrv)

    def diagnose(self, max_lag, mode="weak", global_=False, band_alpha=None):
        """Portmanteau report for lags 1..max_lag."""
        check_is_fitted(self, "fit_result_")
        return diagnose(self.fit_result_, max_lag, mode, self._lrv, global_, band_alpha)
