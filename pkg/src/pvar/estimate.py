"""Least squares estimation of PVAR models.

Per-season OLS, two-step feasible GLS under linear constraints, residuals,
covariance estimates and standard errors under strong (iid) or weak
(uncorrelated but dependent) innovations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .exceptions import DimensionMismatch, MissingConstraints, SingularDesign, SingularGlsSystem
from .lrv import LrvConfig, long_run_variance
from .model import PvarModel, SeriesData, shift

CONDITION_LIMIT = 1e12


@dataclass
class RegressorBlocks:
    """Per-season design: ``X[v]`` is d p(v) x N, ``Z[v]`` is d x N and
    ``valid[v]`` flags columns whose lags are all observed."""

    X: list
    Z: list
    valid: list


@dataclass
class StandardErrors:
    """Per-season coefficient covariances (``cov[v]`` is Theta / N) and the
    derived standard errors, t-statistics and two-sided normal p-values."""

    mode: str
    cov: list
    se: list
    t_stat: list
    p_value: list
    xi_se: list | None = None


@dataclass
class FitResult:
    spec: object
    data: SeriesData
    blocks: RegressorBlocks
    coef: list
    beta: list
    residuals: SeriesData
    sigma_tilde: list
    sigma_hat: list
    omega_hat: list
    mode: str = "unconstrained"
    xi: list | None = None
    se_strong: StandardErrors | None = None
    se_weak: StandardErrors | None = None
    first_stage_sigma: list | None = field(default=None, repr=False)

    @property
    def N(self):
        return self.data.N

    def to_model(self, mu=None):
        """Fitted PvarModel, with Sigma estimated by the N - d p(v) divisor."""
        phi = [[B[:, k * self.spec.d:(k + 1) * self.spec.d] for k in range(self.spec.p[v])]
               for v, B in enumerate(self.coef)]
        return PvarModel(self.spec, phi, [0.5 * (m + m.T) for m in self.sigma_tilde], mu)


def build_regressors(data, spec, demeaned=False):
    """Stack ``X_n(v) = (Y_{ns+v-1}, ..., Y_{ns+v-p(v)})`` with presample zeros.

    ``demeaned=True`` removes per-season sample means before stacking.
    """
    if data.s != spec.s or data.d != spec.d:
        raise DimensionMismatch(f"data (s={data.s}, d={data.d}) does not match spec (s={spec.s}, d={spec.d})")
    values = data.values
    if demeaned:
        values = values - np.tile(seasonal_means(data).T, data.N)
    s, N = spec.s, data.N
    lags = [shift(values, k) for k in range(1, spec.max_order + 1)]
    X, Z, valid = [], [], []
    cols = np.arange(N) * s
    for v in range(s):
        p = spec.p[v]
        Z.append(values[:, v::s])
        if p:
            X.append(np.vstack([lags[k - 1][:, v::s] for k in range(1, p + 1)]))
        else:
            X.append(np.zeros((0, N)))
        valid.append(cols + v - p >= 0)
    return RegressorBlocks(X, Z, valid)


def seasonal_means(data):
    """s x d matrix of per-season sample means."""
    return np.stack([data.season(v).mean(axis=1) for v in range(data.s)])


def _fit_columns(N, drop_first_year):
    cols = np.ones(N, dtype=bool)
    if drop_first_year:
        cols[0] = False
    return cols


def _checked_solve(G, rhs, season, error=SingularDesign):
    cond = np.linalg.cond(G) if G.size else 1.0
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        if error is SingularDesign:
            raise SingularDesign(season, cond)
        raise error(season)
    return np.linalg.solve(G, rhs)


def _assemble(data, spec, blocks, coef, mode, xi=None, first_stage=None):
    s, d, N = spec.s, spec.d, data.N
    resid = np.zeros_like(data.values)
    sigma_tilde, sigma_hat, omega = [], [], []
    for v in range(s):
        X, Z = blocks.X[v], blocks.Z[v]
        E = Z - coef[v] @ X
        E[:, ~blocks.valid[v]] = 0.0
        resid[:, v::s] = E
        cross = E @ E.T
        sigma_tilde.append(cross / (N - d * spec.p[v]))
        sigma_hat.append(cross / N)
        omega.append(X @ X.T / N)
    beta = [B.ravel(order="F") for B in coef]
    return FitResult(spec, data, blocks, coef, beta, SeriesData(resid, s), sigma_tilde, sigma_hat,
                     omega, mode, xi, first_stage_sigma=first_stage)


def fit_ols(data, spec, drop_first_year=False):
    """Per-season least squares ``B(v) = Z X^T (X X^T)^-1`` via a linear solve."""
    blocks = build_regressors(data, spec)
    if data.N <= max(spec.d * p for p in spec.p):
        raise DimensionMismatch("not enough years for the requested orders")
    cols = _fit_columns(data.N, drop_first_year)
    coef = []
    for v in range(spec.s):
        X, Z = blocks.X[v][:, cols], blocks.Z[v][:, cols]
        if not X.shape[0]:
            coef.append(np.zeros((spec.d, 0)))
            continue
        coef.append(_checked_solve(X @ X.T, X @ Z.T, v + 1).T)
    return _assemble(data, spec, blocks, coef, "unconstrained")


def fit_constrained(data, spec, drop_first_year=False):
    """Two-step feasible GLS under ``beta(v) = R(v) xi(v) + b(v)``."""
    if spec.constraints is None:
        raise MissingConstraints("fit_constrained needs constraints for every season")
    first = fit_ols(data, spec.with_constraints(None), drop_first_year)
    d = spec.d
    cols = _fit_columns(data.N, drop_first_year)
    coef, xis = [], []
    for v in range(spec.s):
        R, b = spec.constraint(v)
        p = spec.p[v]
        if not p:
            coef.append(np.zeros((d, 0)))
            xis.append(np.zeros(0))
            continue
        X, Z = first.blocks.X[v][:, cols], first.blocks.Z[v][:, cols]
        S_inv = _inv_sym(first.sigma_tilde[v])
        B0 = b.reshape(d, d * p, order="F")
        # R^T (X X^T kron S^-1) R and R^T vec(S^-1 (Z - B0 X) X^T)
        lhs = R.T @ np.kron(X @ X.T, S_inv) @ R
        rhs = R.T @ (S_inv @ (Z - B0 @ X) @ X.T).ravel(order="F")
        xi = _checked_solve(lhs, rhs, v + 1, SingularGlsSystem)
        xis.append(xi)
        coef.append((R @ xi + b).reshape(d, d * p, order="F"))
    return _assemble(data, spec, first.blocks, coef, "constrained", xis, first.sigma_tilde)


def fit(data, spec, drop_first_year=False):
    """OLS without constraints, feasible GLS with them."""
    if spec.constraints is None:
        return fit_ols(data, spec, drop_first_year)
    return fit_constrained(data, spec, drop_first_year)


def _inv_sym(m):
    return np.linalg.solve(m, np.eye(m.shape[0]))


def score_process(fit_result, v):
    """``X_n(v) kron eps_{ns+v}`` as an N x d^2 p(v) array."""
    X = fit_result.blocks.X[v]
    E = fit_result.residuals.season(v)
    return (X.T[:, :, None] * E.T[:, None, :]).reshape(X.shape[1], -1)


def gls_weights(fit_result, v):
    """``[R^T (Omega kron S^-1) R]^-1`` and ``H = [..]^-1 R^T (I kron S^-1)``
    with S the residual covariance of divisor N - d p(v)."""
    R, _ = fit_result.spec.constraint(v)
    S_inv = _inv_sym(fit_result.sigma_tilde[v])
    dp = fit_result.spec.d * fit_result.spec.p[v]
    theta_xi = _inv_sym(R.T @ np.kron(fit_result.omega_hat[v], S_inv) @ R)
    H = theta_xi @ R.T @ np.kron(np.eye(dp), S_inv)
    return theta_xi, H


def standard_errors(fit_result, mode="strong", lrv_cfg=LrvConfig()):
    """Coefficient standard errors under strong or weak innovations."""
    if mode not in ("strong", "weak"):
        raise ValueError(f"unknown mode {mode!r}")
    spec, N = fit_result.spec, fit_result.N
    covs, xi_ses, ses, ts, ps = [], [], [], [], []
    constrained = fit_result.mode == "constrained"
    for v in range(spec.s):
        if not spec.p[v]:
            covs.append(np.zeros((0, 0)))
            xi_ses.append(np.zeros(0))
            ses.append(np.zeros(0))
            ts.append(np.zeros(0))
            ps.append(np.zeros(0))
            continue
        d = spec.d
        omega_inv = _inv_sym(fit_result.omega_hat[v])
        if mode == "weak":
            psi = long_run_variance(score_process(fit_result, v), lrv_cfg)
        if constrained:
            R, _ = spec.constraint(v)
            theta_xi, H = gls_weights(fit_result, v)
            if mode == "weak":
                theta_xi = H @ psi @ H.T
            theta = R @ theta_xi @ R.T
            xi_ses.append(np.sqrt(np.clip(np.diag(theta_xi), 0, None) / N))
        elif mode == "strong":
            theta = np.kron(omega_inv, fit_result.sigma_tilde[v])
        else:
            sandwich = np.kron(omega_inv, np.eye(d))
            theta = sandwich @ psi @ sandwich
        cov = theta / N
        se = np.sqrt(np.clip(np.diag(cov), 0, None))
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(se > 0, fit_result.beta[v] / np.where(se > 0, se, 1.0), np.nan)
        covs.append(cov)
        ses.append(se)
        ts.append(t)
        ps.append(2.0 * stats.norm.sf(np.abs(t)))
    return StandardErrors(mode, covs, ses, ts, ps, xi_ses if constrained else None)


def with_standard_errors(fit_result, modes=("strong", "weak"), lrv_cfg=LrvConfig()):
    """Populate ``se_strong`` / ``se_weak`` in place and return the fit."""
    if "strong" in modes:
        fit_result.se_strong = standard_errors(fit_result, "strong", lrv_cfg)
    if "weak" in modes:
        fit_result.se_weak = standard_errors(fit_result, "weak", lrv_cfg)
    return fit_result


def fit_to_dict(fit_result):
    """JSON-ready summary keyed by 1-based season."""
    seasons = {}
    for v in range(fit_result.spec.s):
        entry = {
            "beta": fit_result.beta[v].tolist(),
            "sigma_tilde": fit_result.sigma_tilde[v].tolist(),
            "sigma_hat": fit_result.sigma_hat[v].tolist(),
            "omega_hat": fit_result.omega_hat[v].tolist(),
        }
        if fit_result.xi is not None:
            entry["xi"] = fit_result.xi[v].tolist()
        for name, se in (("strong", fit_result.se_strong), ("weak", fit_result.se_weak)):
            if se is not None:
                entry[f"se_{name}"] = se.se[v].tolist()
                entry[f"p_value_{name}"] = [None if np.isnan(x) else x for x in se.p_value[v].tolist()]
                if se.xi_se is not None:
                    entry[f"xi_se_{name}"] = se.xi_se[v].tolist()
        seasons[str(v + 1)] = entry
    return {"mode": fit_result.mode, "N": fit_result.N, "s": fit_result.spec.s, "d": fit_result.spec.d,
            "p": list(fit_result.spec.p), "seasons": seasons}
