"""Long-run variance estimators for a stationary vector sequence.

Inputs are ``N_obs x q`` arrays (rows are time). Both estimators demean the
sequence first and return a symmetric positive semidefinite q x q matrix.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import InsufficientSample, NearSingularA1

A1_INVERSE_LIMIT = 1e10


class LrvMethod(str, enum.Enum):
    VAR_SPECTRAL = "var"
    HAC_BARTLETT = "hac"


@dataclass(frozen=True)
class LrvConfig:
    """Estimator settings.

    ``ridge`` is relative: the penalty added to the lagged cross-product
    matrix is ``ridge * trace / (q r)``, which keeps the estimator exactly
    quadratically homogeneous. ``order`` fixes the VAR order (0 gives the
    sample covariance); ``bandwidth=None`` picks ``floor(4 (N/100)^(2/9))``.
    """

    method: LrvMethod = LrvMethod.VAR_SPECTRAL
    r_max: int = 5
    order: int | None = None
    ridge: float = 1e-6
    bandwidth: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "method", LrvMethod(self.method))
        if self.r_max < 1:
            raise ValueError("r_max must be at least 1")
        if self.ridge < 0:
            raise ValueError("ridge must be nonnegative")
        if self.order is not None and self.order < 0:
            raise ValueError("order must be nonnegative")
        if self.bandwidth is not None and self.bandwidth < 0:
            raise ValueError("bandwidth must be nonnegative")

    def replace(self, **changes):
        fields = dict(method=self.method, r_max=self.r_max, order=self.order,
                      ridge=self.ridge, bandwidth=self.bandwidth)
        fields.update(changes)
        return LrvConfig(**fields)


def clip_psd(m):
    """Symmetrize and clip negative eigenvalues to zero.

    Returns the repaired matrix and the number of clipped eigenvalues.
    """
    m = 0.5 * (m + m.T)
    vals, vecs = np.linalg.eigh(m)
    neg = vals < 0
    if not neg.any():
        return m, 0
    vals = np.where(neg, 0.0, vals)
    out = (vecs * vals) @ vecs.T
    return 0.5 * (out + out.T), int(neg.sum())


def _as_obs(W):
    W = np.asarray(W, dtype=float)
    if W.ndim == 1:
        W = W[:, None]
    return W - W.mean(axis=0)


def default_bandwidth(n_obs):
    return int(math.floor(4 * (n_obs / 100.0) ** (2.0 / 9.0)))


def _fit_var(W, r, start, ridge):
    """Ridge least squares VAR(r) on rows ``start..`` of W.

    Returns (coefficient blocks stacked as qr x q, residual covariance, n_eff).
    """
    n, q = W.shape
    Y = W[start:]
    X = np.hstack([W[start - i:n - i] for i in range(1, r + 1)])
    G = X.T @ X
    if ridge > 0:
        G[np.diag_indices_from(G)] += ridge * np.trace(G) / (q * r)
    try:
        A = np.linalg.solve(G, X.T @ Y)
    except np.linalg.LinAlgError:
        raise NearSingularA1("VAR design matrix is singular") from None
    U = Y - X @ A
    return A, U.T @ U / Y.shape[0], Y.shape[0]


def select_var_order(W, r_max, ridge=1e-6):
    """AIC order choice on a common sample; ties go to the smaller order."""
    W = _as_obs(W)
    n, q = W.shape
    r_top = min(r_max, max((n - 2) // (q + 1), 0))
    if r_top < 1:
        raise InsufficientSample(f"{n} observations cannot support a VAR(1) in dimension {q}")
    best_r, best_aic = 1, np.inf
    for r in range(1, r_top + 1):
        _, sigma_u, n_eff = _fit_var(W, r, r_top, ridge)
        sign, logdet = np.linalg.slogdet(sigma_u)
        aic = (logdet if sign > 0 else -np.inf) + 2.0 * r * q * q / n_eff
        if aic < best_aic - 1e-12:
            best_r, best_aic = r, aic
    return best_r


def var_spectral_lrv(W, cfg=LrvConfig()):
    """Spectral density at frequency zero from a fitted autoregression:
    ``A(1)^-1 Sigma_u A(1)^-T``."""
    W = _as_obs(W)
    n, q = W.shape
    r = cfg.order if cfg.order is not None else select_var_order(W, cfg.r_max, cfg.ridge)
    if r == 0:
        if n < 2:
            raise InsufficientSample("need at least 2 observations")
        return clip_psd(W.T @ W / n)[0]
    if n <= q * r + 1 + r:
        raise InsufficientSample(f"{n} observations cannot support a VAR({r}) in dimension {q}")
    A, sigma_u, _ = _fit_var(W, r, r, cfg.ridge)
    a1 = np.eye(q) - A.reshape(r, q, q).sum(axis=0).T
    try:
        a1_inv = np.linalg.inv(a1)
    except np.linalg.LinAlgError:
        raise NearSingularA1("A(1) is singular") from None
    if np.linalg.norm(a1_inv, 2) > A1_INVERSE_LIMIT:
        raise NearSingularA1("A(1) is nearly singular")
    return clip_psd(a1_inv @ sigma_u @ a1_inv.T)[0]


def hac_lrv(W, cfg=LrvConfig(method=LrvMethod.HAC_BARTLETT)):
    """Bartlett-kernel estimator with weights ``1 - h / (b + 1)``."""
    W = _as_obs(W)
    n, q = W.shape
    b = default_bandwidth(n) if cfg.bandwidth is None else cfg.bandwidth
    if n <= b + 1:
        raise InsufficientSample(f"{n} observations with bandwidth {b}")
    out = W.T @ W / n
    for h in range(1, b + 1):
        gamma = W[h:].T @ W[:-h] / n
        out += (1.0 - h / (b + 1.0)) * (gamma + gamma.T)
    return clip_psd(out)[0]


def long_run_variance(W, cfg=LrvConfig()):
    """Dispatch on ``cfg.method``; a near-singular VAR falls back to HAC."""
    if cfg.method is LrvMethod.HAC_BARTLETT:
        return hac_lrv(W, cfg)
    try:
        return var_spectral_lrv(W, cfg)
    except NearSingularA1:
        warnings.warn("VAR spectral LRV near singular, using Bartlett HAC", RuntimeWarning, stacklevel=2)
        return hac_lrv(W, cfg.replace(method=LrvMethod.HAC_BARTLETT))
