"""Tail probabilities of weighted sums of independent chi-squared(1) variables.

``P(sum_i w_i Z_i^2 > x)`` is obtained from Imhof's inversion formula

    p = 1/2 + (1/pi) int_0^inf sin(theta(u)) / (u rho(u)) du,
    theta(u) = 1/2 sum arctan(w_i u) - x u / 2,
    rho(u) = prod (1 + w_i^2 u^2)^(1/4),

integrated on a truncated range with adaptive Gauss-Legendre panels.
"""

from __future__ import annotations

import warnings
from typing import NamedTuple

import numpy as np

from .exceptions import EmptyWeights, QuadratureWarning

WEIGHT_FLOOR = 1e-12
MAX_PANELS = 10_000
_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(16)


class ImhofResult(NamedTuple):
    p: float
    error: float
    converged: bool


class WeightedChiSq:
    """Law of ``sum w_i Z_i^2``.

    Negative weights are clipped to zero (``n_clipped`` counts them) and
    weights below ``1e-12 * max(w)`` are dropped.
    """

    def __init__(self, weights):
        w = np.asarray(weights, dtype=float).ravel()
        if w.size == 0 or not np.all(np.isfinite(w)):
            raise EmptyWeights("weights must be a nonempty finite vector")
        self.n_clipped = int(np.sum(w < 0))
        w = np.clip(w, 0.0, None)
        top = w.max()
        if top <= 0:
            raise EmptyWeights("no positive weight")
        self.weights = np.sort(w[w >= WEIGHT_FLOOR * top])[::-1]

    @property
    def mean(self):
        return float(self.weights.sum())

    def imhof(self, x, tol=1e-6):
        return imhof(self.weights, x, tol)

    def sf(self, x, tol=1e-6):
        return survival(self, x, tol)

    def mc_sf(self, x, nsamples=1_000_000, seed=0):
        return mc_survival(self, x, nsamples, seed)

    def __repr__(self):
        return f"WeightedChiSq(m={self.weights.size}, mean={self.mean:.4g})"


def _as_dist(dist):
    return dist if isinstance(dist, WeightedChiSq) else WeightedChiSq(dist)


def _integrand(u, w, x):
    wu = np.multiply.outer(u, w)
    theta = 0.5 * np.arctan(wu).sum(axis=-1) - 0.5 * x * u
    log_rho = 0.25 * np.log1p(wu * wu).sum(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.sin(theta) / (u * np.exp(log_rho))
    return np.where(u == 0, 0.5 * (w.sum() - x), out)


def _tail_bound(U, w, x):
    """Bound on ``(1/pi) |int_U^inf ...|``.

    Imhof's envelope bound, and, once theta is decreasing, a Bonnet
    mean-value bound ``2 g(U) / (pi |theta'(U)|)`` with ``g = 1/(u rho)``
    that exploits the oscillation.
    """
    k = 0.5 * w.size
    envelope = np.exp(-np.log(np.pi * k) - k * np.log(U) - 0.5 * np.log(w).sum())
    slope = 0.5 * np.sum(w / (1.0 + (w * U) ** 2)) - 0.5 * x
    if slope < 0:
        g = np.exp(-np.log(U) - 0.25 * np.log1p((w * U) ** 2).sum())
        return min(envelope, 2.0 * g / (np.pi * -slope))
    return envelope


def _truncation_point(w, x, target):
    U = 1.0 / w[0]
    while _tail_bound(U, w, x) > target:
        U *= 2.0
    lo = U / 2.0
    for _ in range(30):
        mid = 0.5 * (lo + U)
        if _tail_bound(mid, w, x) > target:
            lo = mid
        else:
            U = mid
        if U - lo < 1e-3 * U:
            break
    return U


def _gauss(a, b, w, x):
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    u = mid[:, None] + half[:, None] * _NODES
    return half * (_integrand(u, w, x) @ _WEIGHTS)


def imhof(weights, x, tol=1e-6):
    """Survival probability with its error estimate and a convergence flag."""
    w = _as_dist(weights).weights
    if x <= 0:
        return ImhofResult(1.0, 0.0, True)
    target = 0.5 * tol
    U = _truncation_point(w, x, target)
    # resolve the arctan bend, the oscillation period and the decay scale
    scale = min(1.0 / w[0], 4.0 * np.pi / x, U)
    n0 = int(min(max(np.ceil(U / scale), 8), MAX_PANELS // 4))
    edges = np.linspace(0.0, U, n0 + 1)
    a, b = edges[:-1], edges[1:]
    total = 0.0
    err_total = 0.0
    budget = np.pi * target
    converged = True
    while a.size:
        m = 0.5 * (a + b)
        whole = _gauss(a, b, w, x)
        halves = _gauss(a, m, w, x) + _gauss(m, b, w, x)
        err = np.abs(whole - halves)
        ok = err <= budget * (b - a) / U
        total += halves[ok].sum()
        err_total += err[ok].sum()
        a, b, m = a[~ok], b[~ok], m[~ok]
        if a.size and n0 + 2 * a.size > MAX_PANELS:
            total += (_gauss(a, m, w, x) + _gauss(m, b, w, x)).sum()
            err_total += err[~ok].sum()
            converged = False
            break
        n0 += a.size
        a, b = np.concatenate([a, m]), np.concatenate([m, b])
    p = 0.5 + total / np.pi
    return ImhofResult(float(min(max(p, 0.0), 1.0)), float(err_total / np.pi + target), converged)


def survival(dist, x, tol=1e-6):
    """``P(sum w_i Z_i^2 > x)``; warns with QuadratureWarning if the panel cap
    is hit before ``tol`` is reached."""
    res = imhof(dist, x, tol)
    if not res.converged:
        warnings.warn(f"Imhof quadrature stopped at error {res.error:.2g}", QuadratureWarning, stacklevel=2)
    return res.p


def mc_survival(dist, x, nsamples=1_000_000, seed=0, chunk=100_000):
    """Monte Carlo frequency of ``sum w_i Z_i^2 > x`` from seeded normal draws."""
    w = _as_dist(dist).weights
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < nsamples:
        n = min(chunk, nsamples - done)
        z = rng.standard_normal((n, w.size))
        hits += int(np.count_nonzero((z * z) @ w > x))
        done += n
    return hits / nsamples
