"""Periodic VAR models: containers, companion form, causality, MA weights,
simulation and forecasting.

Seasons are 0-based inside arrays (``v = 0..s-1`` stands for season ``v + 1``)
and 1-based in serialized documents. Flat time column ``c = n * s + v`` holds
year ``n``, season ``v``; every lag is taken on that flat column so lags that
cross a year boundary land in the right season automatically.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .exceptions import (
    CholeskyFailure,
    DimensionMismatch,
    InsufficientHistory,
    InvalidModel,
    NotCausal,
)

CAUSALITY_TOL = 1e-8
DEFAULT_BURN_IN = 100


class NoiseKind(str, enum.Enum):
    STRONG_GAUSSIAN = "strong"
    WEAK_PRODUCT = "weak"


@dataclass(frozen=True, eq=False)
class PvarSpec:
    """Model skeleton: season count, dimension, per-season orders and optional
    linear constraints ``beta(v) = R(v) xi(v) + b(v)``."""

    s: int
    d: int
    p: tuple
    constraints: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "p", tuple(int(k) for k in self.p))
        if self.s < 1 or self.d < 1:
            raise InvalidModel("s and d must be at least 1")
        if len(self.p) != self.s:
            raise InvalidModel(f"expected {self.s} orders, got {len(self.p)}")
        if min(self.p) < 0:
            raise InvalidModel("orders must be nonnegative")
        if self.constraints is not None:
            cons = []
            if len(self.constraints) != self.s:
                raise InvalidModel("constraints must be given for every season")
            for v, (R, b) in enumerate(self.constraints):
                n_par = self.n_params(v)
                R = np.asarray(R, dtype=float).reshape(n_par, -1) if n_par else np.zeros((0, 0))
                b = np.zeros(n_par) if b is None else np.asarray(b, dtype=float).reshape(n_par)
                k = R.shape[1]
                if n_par and not 1 <= k <= n_par:
                    raise InvalidModel(f"season {v + 1}: need 1 <= K <= {n_par}, got {k}")
                if n_par and np.linalg.matrix_rank(R) != k:
                    raise InvalidModel(f"season {v + 1}: R is not of full column rank")
                cons.append((R, b))
            object.__setattr__(self, "constraints", tuple(cons))

    @property
    def max_order(self):
        return max(self.p)

    @property
    def companion_order(self):
        return math.ceil(self.max_order / self.s)

    def n_params(self, v):
        return self.d * self.d * self.p[v]

    def n_free(self, v):
        """Number of free parameters K(v); equals d^2 p(v) without constraints."""
        if self.constraints is None or not self.p[v]:
            return self.n_params(v)
        return self.constraints[v][0].shape[1]

    def constraint(self, v):
        """Return (R, b) for season ``v``, the identity pair when unconstrained."""
        if self.constraints is None:
            n_par = self.n_params(v)
            return np.eye(n_par), np.zeros(n_par)
        return self.constraints[v]

    def with_constraints(self, constraints):
        return PvarSpec(self.s, self.d, self.p, constraints)


@dataclass(frozen=True, eq=False)
class PvarModel:
    """Concrete parameterization. ``phi[v][k - 1]`` is the lag-k matrix of
    season v; ``sigma_eps[v]`` the innovation covariance; ``mu[v]`` the mean."""

    spec: PvarSpec
    phi: tuple
    sigma_eps: tuple
    mu: np.ndarray = field(default=None)

    def __post_init__(self):
        s, d = self.spec.s, self.spec.d
        phi = tuple(tuple(np.asarray(m, dtype=float).reshape(d, d) for m in season) for season in self.phi)
        if len(phi) != s or any(len(phi[v]) != self.spec.p[v] for v in range(s)):
            raise InvalidModel("coefficient storage does not match the orders")
        sigma = tuple(np.asarray(m, dtype=float).reshape(d, d) for m in self.sigma_eps)
        if len(sigma) != s:
            raise InvalidModel("need one innovation covariance per season")
        for v, m in enumerate(sigma):
            if not np.allclose(m, m.T, atol=1e-10, rtol=0):
                raise InvalidModel(f"sigma_eps of season {v + 1} is not symmetric")
            if np.linalg.eigvalsh(m)[0] <= 0:
                raise InvalidModel(f"sigma_eps of season {v + 1} is not positive definite")
        mu = np.zeros((s, d)) if self.mu is None else np.asarray(self.mu, dtype=float).reshape(s, d)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "sigma_eps", sigma)
        object.__setattr__(self, "mu", mu)

    @classmethod
    def from_arrays(cls, phi, sigma_eps, mu=None, constraints=None):
        """Build a model inferring (s, d, p) from nested coefficient lists."""
        s = len(phi)
        d = np.asarray(sigma_eps[0]).shape[0]
        spec = PvarSpec(s, d, tuple(len(season) for season in phi), constraints)
        return cls(spec, phi, sigma_eps, mu)

    def coef_matrix(self, v):
        """``B(v) = [Phi_1(v), ..., Phi_p(v)]`` of shape d x d p(v)."""
        if not self.phi[v]:
            return np.zeros((self.spec.d, 0))
        return np.hstack(self.phi[v])

    def beta(self, v):
        """Column-major vectorization of ``B(v)``."""
        return self.coef_matrix(v).ravel(order="F")

    def coef(self, v, k):
        """Phi_k(v), zero beyond the order of the season."""
        if 1 <= k <= self.spec.p[v]:
            return self.phi[v][k - 1]
        return np.zeros((self.spec.d, self.spec.d))


class SeriesData:
    """A d x (N s) series with flat and (year, season) access."""

    def __init__(self, values, s):
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[None, :]
        if values.ndim != 2:
            raise DimensionMismatch("series values must be a d x n matrix")
        if s < 1 or values.shape[1] % s:
            raise DimensionMismatch(f"length {values.shape[1]} is not a multiple of s={s}")
        self.values = values
        self.s = int(s)

    @property
    def d(self):
        return self.values.shape[0]

    @property
    def n(self):
        return self.values.shape[1]

    @property
    def N(self):
        return self.n // self.s

    def at(self, t):
        """Observation at 1-based flat time t."""
        return self.values[:, t - 1]

    def at_year_season(self, year, season):
        """Observation at 0-based year and 1-based season."""
        return self.values[:, year * self.s + season - 1]

    def season(self, v):
        """d x N block of 0-based season v."""
        return self.values[:, v:: self.s]

    def lagged(self, k):
        """Series shifted k steps back in flat time, zero before the start."""
        return shift(self.values, k)

    def __eq__(self, other):
        return isinstance(other, SeriesData) and self.s == other.s and np.array_equal(self.values, other.values)

    def __repr__(self):
        return f"SeriesData(d={self.d}, N={self.N}, s={self.s})"


def shift(values, k):
    """Return ``out[:, c] = values[:, c - k]`` with zeros where ``c - k < 0``."""
    out = np.zeros_like(values)
    if k == 0:
        out[...] = values
    elif k < values.shape[1]:
        out[:, k:] = values[:, :-k]
    return out


class MaCoefficients(NamedTuple):
    """``F[v, i]`` is the d x d MA weight F_i of season v."""

    F: np.ndarray

    @property
    def max_lag(self):
        return self.F.shape[1] - 1


class CausalityCheck(NamedTuple):
    causal: bool
    spectral_radius: float


def companion_form(model):
    """Year-indexed VAR form of the model.

    The stacked vector for year n lists seasons in reverse, ``(Y_{ns+s}, ...,
    Y_{ns+1})``, so block row i belongs to season ``s - i``. Returns
    ``(phi0_star, [phi1_star, ..., phi_pstar_star])``.
    """
    s, d = model.spec.s, model.spec.d
    p_star = model.spec.companion_order
    phi0 = np.eye(s * d)
    phis = [np.zeros((s * d, s * d)) for _ in range(p_star)]
    for i in range(s):
        v = s - 1 - i
        rows = slice(i * d, (i + 1) * d)
        for j in range(i + 1, s):
            phi0[rows, j * d:(j + 1) * d] = -model.coef(v, j - i)
        for k in range(1, p_star + 1):
            for j in range(s):
                phis[k - 1][rows, j * d:(j + 1) * d] = model.coef(v, k * s + j - i)
    return phi0, phis


def is_causal(model, tol=CAUSALITY_TOL):
    """Check that the companion VAR has spectral radius below ``1 - tol``."""
    phi0, phis = companion_form(model)
    if not phis:
        return CausalityCheck(True, 0.0)
    q = phi0.shape[0]
    blocks = [np.linalg.solve(phi0, m) for m in phis]
    big = np.zeros((q * len(blocks), q * len(blocks)))
    big[:q, :] = np.hstack(blocks)
    big[q:, :-q] = np.eye(q * (len(blocks) - 1))
    radius = float(np.max(np.abs(np.linalg.eigvals(big))))
    return CausalityCheck(radius < 1 - tol, radius)


def ma_infinity(model, max_lag):
    """MA(infinity) weights via ``F_i(v) = sum_k Phi_k(v) F_{i-k}(v-k)``."""
    check = is_causal(model)
    if not check.causal:
        raise NotCausal(check.spectral_radius)
    s, d = model.spec.s, model.spec.d
    F = np.zeros((s, max_lag + 1, d, d))
    F[:, 0] = np.eye(d)
    for i in range(1, max_lag + 1):
        for v in range(s):
            for k in range(1, min(i, model.spec.p[v]) + 1):
                F[v, i] += model.phi[v][k - 1] @ F[(v - k) % s, i - k]
    return MaCoefficients(F)


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def innovation_factors(model):
    """Lower Cholesky factors L(v) with L L^T = Sigma(v), i.e. the transpose of
    the upper factor M(v) with M^T M = Sigma(v)."""
    out = []
    for v, sig in enumerate(model.sigma_eps):
        try:
            out.append(np.linalg.cholesky(sig))
        except np.linalg.LinAlgError:
            raise CholeskyFailure(v + 1) from None
    return out


def draw_noise(model, n_years, noise, rng):
    """Innovations for ``n_years`` whole years, shape d x (n_years s)."""
    s, d = model.spec.s, model.spec.d
    T = n_years * s
    noise = NoiseKind(noise)
    factors = innovation_factors(model)
    if noise is NoiseKind.STRONG_GAUSSIAN:
        base = rng.standard_normal((T, d)).T
    else:
        eta = rng.standard_normal((T + 2, d)).T
        base = eta[:, 2:] * eta[:, 1:-1] * eta[:, :-2]
    eps = np.empty((d, T))
    for v in range(s):
        eps[:, v::s] = factors[v] @ base[:, v::s]
    return eps


def run_recursion(model, eps):
    """Zero-start recursion of the zero-mean model driven by ``eps``."""
    s, d = model.spec.s, model.spec.d
    P = model.spec.max_order
    T = eps.shape[1]
    y = np.zeros((d, T + P))
    coefs = [model.coef_matrix(v) for v in range(s)]
    orders = model.spec.p
    for t in range(T):
        v = t % s
        p = orders[v]
        c = t + P
        if p:
            lags = y[:, c - p:c][:, ::-1].ravel(order="F")
            y[:, c] = coefs[v] @ lags + eps[:, t]
        else:
            y[:, c] = eps[:, t]
    return y[:, P:]


def run_recursion_companion(model, eps):
    """Same trajectory as :func:`run_recursion`, computed year by year through
    the stacked VAR form."""
    s, d = model.spec.s, model.spec.d
    n_years = eps.shape[1] // s
    phi0, phis = companion_form(model)
    # reverse season order within each year
    eps_star = eps.reshape(d, n_years, s)[:, :, ::-1].transpose(1, 2, 0).reshape(n_years, s * d)
    y_star = np.zeros((n_years, s * d))
    for n in range(n_years):
        rhs = eps_star[n].copy()
        for k, m in enumerate(phis, start=1):
            if n - k >= 0:
                rhs += m @ y_star[n - k]
        y_star[n] = np.linalg.solve(phi0, rhs)
    return y_star.reshape(n_years, s, d)[:, ::-1, :].transpose(2, 0, 1).reshape(d, n_years * s)


def simulate(model, N, noise=NoiseKind.STRONG_GAUSSIAN, burn_in_years=DEFAULT_BURN_IN, seed=None,
             return_noise=False, method="direct"):
    """Simulate N years after discarding ``burn_in_years``.

    ``seed`` may be an int, a SeedSequence or a Generator. With
    ``return_noise=True`` the retained innovations are returned as a second
    SeriesData.
    """
    if N < 1 or burn_in_years < 0:
        raise ValueError("need N >= 1 and burn_in_years >= 0")
    check = is_causal(model)
    if not check.causal:
        raise NotCausal(check.spectral_radius)
    rng = _rng(seed)
    s = model.spec.s
    eps = draw_noise(model, N + burn_in_years, noise, rng)
    if method == "direct":
        y = run_recursion(model, eps)
    elif method == "companion":
        y = run_recursion_companion(model, eps)
    else:
        raise ValueError(f"unknown method {method!r}")
    start = burn_in_years * s
    y = y[:, start:] + np.tile(model.mu.T, N)
    data = SeriesData(y, s)
    if return_noise:
        return data, SeriesData(eps[:, start:], s)
    return data


def forecast(model, history, horizon):
    """Recursive plug-in forecasts following the end of ``history``.

    Lags are taken on the mean-adjusted series, so the zero-mean recursion is
    continued and the seasonal mean is added back.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if history.s != model.spec.s or history.d != model.spec.d:
        raise DimensionMismatch("history does not match the model")
    P = model.spec.max_order
    if history.n < P:
        raise InsufficientHistory(f"need at least {P} observations, got {history.n}")
    s = model.spec.s
    centred = history.values - np.tile(model.mu.T, history.N)
    path = np.hstack([centred, np.zeros((model.spec.d, horizon))])
    for c in range(history.n, history.n + horizon):
        v = c % s
        acc = np.zeros(model.spec.d)
        for k in range(1, model.spec.p[v] + 1):
            acc += model.phi[v][k - 1] @ path[:, c - k]
        path[:, c] = acc
    out = path[:, history.n:]
    for j in range(horizon):
        out[:, j] += model.mu[(history.n + j) % s]
    return out


# --- JSON documents ---------------------------------------------------------

def _matrix(value, d):
    return np.asarray(value, dtype=float).reshape(d, d)


def model_to_dict(model):
    s, d = model.spec.s, model.spec.d
    doc = {
        "s": s,
        "d": d,
        "p": list(model.spec.p),
        "phi": {str(v + 1): [m.tolist() for m in model.phi[v]] for v in range(s)},
        "sigma_eps": {str(v + 1): model.sigma_eps[v].tolist() for v in range(s)},
        "mu": {str(v + 1): model.mu[v].tolist() for v in range(s)},
    }
    if model.spec.constraints is not None:
        doc["constraints"] = constraints_to_dict(model.spec.constraints)
    return doc


def constraints_to_dict(constraints):
    return {str(v + 1): {"R": np.asarray(R).tolist(), "b": np.asarray(b).tolist()}
            for v, (R, b) in enumerate(constraints)}


def constraints_from_dict(doc, s):
    if doc is None:
        return None
    missing = [v for v in range(1, s + 1) if str(v) not in doc]
    if missing:
        raise InvalidModel(f"constraints missing for seasons {missing}")
    return tuple((doc[str(v)]["R"], doc[str(v)].get("b")) for v in range(1, s + 1))


def model_from_dict(doc):
    try:
        s, d = int(doc["s"]), int(doc["d"])
        p = [int(k) for k in doc["p"]]
        phi = [[_matrix(m, d) for m in doc["phi"].get(str(v + 1), [])] for v in range(s)]
        sigma = [_matrix(doc["sigma_eps"][str(v + 1)], d) for v in range(s)]
        mu_doc = doc.get("mu") or {}
        mu = np.array([mu_doc.get(str(v + 1), [0.0] * d) for v in range(s)], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidModel(f"malformed model document: {exc}") from None
    spec = PvarSpec(s, d, p, constraints_from_dict(doc.get("constraints"), s))
    return PvarModel(spec, phi, sigma, mu)


def as_series(values: np.ndarray | Sequence, s: int) -> SeriesData:
    return values if isinstance(values, SeriesData) else SeriesData(values, s)
