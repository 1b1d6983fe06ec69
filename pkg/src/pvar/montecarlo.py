"""Monte Carlo harness for empirical size and power of the portmanteau tests.

Tests:
  Q1  chi-squared reference with d^2 M - K(v) degrees of freedom,
  Q2  weighted chi-squared with weights from the iid-innovation covariance,
  Q3  weighted chi-squared with weights from the long-run-variance covariance.
All three use the lag-corrected statistic Q*.
"""

from __future__ import annotations

import concurrent.futures
import csv
import io
import os
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats
from statsmodels.stats.proportion import proportion_confint

from .diagnostics import (
    GLOBAL_LRV,
    asymptotic_cov,
    confidence_bands,
    lag_covariances,
    portmanteau_pair,
    strong_df,
)
from .estimate import fit
from .exceptions import PvarError, ReplicationFailure, UnknownDgp
from .lrv import LrvConfig
from .model import NoiseKind, PvarModel, PvarSpec, model_from_dict, model_to_dict, simulate
from .quadform import WeightedChiSq, imhof

FAILURE_LIMIT = 0.05
TESTS = ("Q1", "Q2", "Q3")

_SIGMA = [[[1.0, 0.5], [0.5, 1.0]], [[1.0, 0.3], [0.3, 1.0]],
          [[1.0, 0.2], [0.2, 1.0]], [[1.0, 0.1], [0.1, 1.0]]]
_DGP1 = [[[0.50, 0.30], [0.10, 0.20]], [[0.42, 0.24], [-0.20, 0.50]],
         [[-0.80, 0.20], [0.60, 0.70]], [[-0.30, 0.50], [0.90, -0.20]]]
_DGP2 = [np.diag([0.95, 0.90]), np.diag([-0.90, 0.95]), np.diag([-0.85, 0.90]), np.diag([-0.95, -0.95])]
_DGP3_LAG1 = [[[0.6, 0.3], [0.6, 0.2]], [[-0.3, 0.4], [0.2, 0.4]],
              [[0.3, 0.3], [0.3, 0.2]], [[-0.4, -0.4], [0.3, -0.4]]]
_DGP3_LAG2 = [[[0.4, 0.6], [-0.2, 0.5]], [[-0.3, 0.3], [0.3, -0.4]],
              [[0.2, 0.5], [-0.3, -0.3]], [[0.3, 0.5], [0.5, 0.3]]]
_POWER_LAG2 = [np.diag([0.3, 0.2]), np.diag([0.2, -0.3]), np.diag([-0.3, 0.2]), np.diag([-0.3, -0.2])]

# labels of the matching published tables, keyed (dgp, noise, global)
REFERENCE_TABLES = {
    ("dgp1", "strong", False): 5, ("dgp3", "strong", False): 6,
    ("dgp1", "strong", True): 7, ("dgp3", "strong", True): 8,
    ("dgp1", "weak", False): 9, ("dgp3", "weak", False): 10,
    ("dgp1", "weak", True): 11, ("dgp3", "weak", True): 12,
    ("power_pvar2", "weak", False): 13,
}


def diagonal_constraints(d, p=1):
    """R selecting the diagonal entries of each lag matrix from vec(B)."""
    n_par = d * d * p
    cols = [k * d * d + i * d + i for k in range(p) for i in range(d)]
    R = np.zeros((n_par, len(cols)))
    R[cols, np.arange(len(cols))] = 1.0
    return R, np.zeros(n_par)


def _normalize(name):
    return str(name).lower().replace("-", "_").replace(" ", "_").replace("powerpvar2", "power_pvar2")


def dgp_catalog(name):
    """Models used in the simulation study: dgp1, dgp2, dgp3, power_pvar2."""
    key = _normalize(name)
    if key == "dgp1":
        return PvarModel.from_arrays([[m] for m in _DGP1], _SIGMA)
    if key == "dgp2":
        cons = tuple(diagonal_constraints(2) for _ in range(4))
        return PvarModel.from_arrays([[m] for m in _DGP2], _SIGMA, constraints=cons)
    if key == "dgp3":
        return PvarModel.from_arrays([[a, b] for a, b in zip(_DGP3_LAG1, _DGP3_LAG2)], _SIGMA)
    if key == "power_pvar2":
        return PvarModel.from_arrays([[a, b] for a, b in zip(_DGP1, _POWER_LAG2)], [np.eye(2)] * 4)
    raise UnknownDgp(name)


@dataclass
class ExperimentConfig:
    """One size or power experiment.

    ``fitted_order`` defaults to the true orders. Constraints attached to the
    DGP are imposed on the fit when the fitted orders equal the true ones.
    ``workers=None`` uses every available core, capped by ``PVAR_THREADS``.
    """

    dgp: object = "dgp1"
    noise: str = "strong"
    N_list: tuple = (200, 1000)
    reps: int = 300
    M_list: tuple = (1, 2, 3)
    tests: tuple = TESTS
    alphas: tuple = (0.05, 0.10)
    fitted_order: object = None
    seed: int = 0
    workers: int | None = None
    burn_in_years: int = 100
    lrv: LrvConfig = field(default_factory=lambda: LrvConfig(r_max=3))
    global_lrv: LrvConfig = GLOBAL_LRV
    include_global: bool = False

    def __post_init__(self):
        self.noise = NoiseKind(self.noise).value
        self.N_list = tuple(int(n) for n in np.atleast_1d(self.N_list))
        self.M_list = tuple(int(m) for m in np.atleast_1d(self.M_list))
        self.tests = tuple(self.tests)
        self.alphas = tuple(float(a) for a in np.atleast_1d(self.alphas))
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if any(not 0 < a < 1 for a in self.alphas):
            raise ValueError("alphas must lie in (0, 1)")
        if set(self.tests) - set(TESTS):
            raise ValueError(f"unknown tests {set(self.tests) - set(TESTS)}")
        if isinstance(self.lrv, dict):
            self.lrv = LrvConfig(**self.lrv)
        if isinstance(self.global_lrv, dict):
            self.global_lrv = LrvConfig(**self.global_lrv)
        self.fit_spec()

    @property
    def model(self):
        return self.dgp if isinstance(self.dgp, PvarModel) else dgp_catalog(self.dgp)

    def fit_spec(self):
        spec = self.model.spec
        if self.fitted_order is None:
            return spec
        orders = tuple(np.broadcast_to(np.asarray(self.fitted_order, dtype=int), (spec.s,)))
        if orders == spec.p:
            return spec
        return PvarSpec(spec.s, spec.d, orders)

    def reference_table(self):
        name = None if isinstance(self.dgp, PvarModel) else _normalize(self.dgp)
        return REFERENCE_TABLES.get((name, self.noise, self.include_global))

    def to_dict(self):
        out = asdict(self)
        out["dgp"] = self.dgp if isinstance(self.dgp, str) else model_to_dict(self.dgp)
        out["lrv"] = _lrv_dict(self.lrv)
        out["global_lrv"] = _lrv_dict(self.global_lrv)
        return out

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        if isinstance(doc.get("dgp"), dict):
            doc["dgp"] = model_from_dict(doc["dgp"])
        return cls(**doc)


def _lrv_dict(cfg):
    out = asdict(cfg)
    out["method"] = cfg.method.value
    return out


def replication_seed(seed, r):
    return np.random.SeedSequence([int(seed), int(r)])


def run_replication(config, N, r):
    """Rejection indicators of one replication.

    Returns ``{(test, M, season, alpha): bool}`` where season is 1..s or
    "global"; cells where a test does not apply are omitted.
    """
    model = config.model
    spec = config.fit_spec()
    rng = np.random.default_rng(replication_seed(config.seed, r))
    data = simulate(model, N, config.noise, config.burn_in_years, rng)
    fitted = fit(data, spec)
    out = {}
    for M in config.M_list:
        vals = portmanteau_pair(lag_covariances(fitted.residuals, M), M)
        pvals = {}
        if "Q1" in config.tests:
            dfs = [strong_df(spec, v, M) for v in range(spec.s)]
            for v, df in enumerate(dfs):
                if df > 0:
                    pvals[("Q1", v + 1)] = stats.chi2.sf(vals.Q_star[v], df)
            if config.include_global and sum(dfs) > 0:
                pvals[("Q1", "global")] = stats.chi2.sf(vals.global_Q_star, sum(dfs))
        for test, mode in (("Q2", "strong"), ("Q3", "weak")):
            if test not in config.tests:
                continue
            acov = asymptotic_cov(fitted, M, mode, config.lrv, config.include_global, config.global_lrv)
            for v in range(spec.s):
                pvals[(test, v + 1)] = imhof(WeightedChiSq(acov.eigenvalues[v]), vals.Q_star[v]).p
            if config.include_global:
                pvals[(test, "global")] = imhof(WeightedChiSq(acov.global_eigenvalues), vals.global_Q_star).p
        for (test, season), p in pvals.items():
            for alpha in config.alphas:
                out[(test, M, season, alpha)] = bool(p < alpha)
    return out


def _safe_replication(args):
    config, N, r = args
    try:
        return run_replication(config, N, r)
    except (PvarError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return exc


def worker_count(requested=None):
    n = requested or os.cpu_count() or 1
    cap = os.environ.get("PVAR_THREADS")
    if cap:
        n = min(n, max(int(cap), 1))
    return max(int(n), 1)


@dataclass
class Cell:
    rejections: int
    count: int

    @property
    def frequency(self):
        return self.rejections / self.count if self.count else float("nan")

    def wilson(self, level=0.95):
        """Wilson score interval for the rejection frequency."""
        if not self.count:
            return (float("nan"), float("nan"))
        lo, hi = proportion_confint(self.rejections, self.count, alpha=1 - level, method="wilson")
        # rounding can push a bound past the estimate at 0 or n rejections
        f = self.frequency
        return min(float(lo), f), max(float(hi), f)


@dataclass
class RejectionTable:
    """Rejection frequencies keyed ``(test, N, M, season, alpha)``."""

    cells: dict
    failures: dict
    config: dict
    kind: str = "size"
    reference_table: int | None = None

    def frequency(self, test, N, M, season, alpha=0.05):
        return self.cells[(test, N, M, season, alpha)].frequency

    def to_rows(self):
        rows = []
        for (test, N, M, season, alpha), cell in sorted(self.cells.items(), key=lambda kv: tuple(map(str, kv[0]))):
            lo, hi = cell.wilson()
            rows.append({"test": test, "N": N, "M": M, "season": season, "alpha": alpha,
                         "frequency": cell.frequency, "rejections": cell.rejections, "count": cell.count,
                         "wilson_lower": lo, "wilson_upper": hi})
        return rows

    def to_csv(self):
        buf = io.StringIO()
        fields = ["reference_table", "test", "N", "M", "season", "alpha", "frequency", "rejections", "count",
                  "wilson_lower", "wilson_upper"]
        w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for row in self.to_rows():
            w.writerow({"reference_table": "" if self.reference_table is None else self.reference_table, **row})
        return buf.getvalue()

    def to_dict(self):
        return {"kind": self.kind, "reference_table": self.reference_table, "config": self.config,
                "failures": {str(k): v for k, v in self.failures.items()}, "cells": self.to_rows()}


def _run(config, kind):
    workers = worker_count(config.workers)
    cells = {}
    failures = {}
    for N in config.N_list:
        jobs = [(config, N, r) for r in range(config.reps)]
        if workers > 1:
            with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_safe_replication, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
        else:
            results = [_safe_replication(job) for job in jobs]
        failed = [res for res in results if isinstance(res, Exception)]
        failures[N] = len(failed)
        if len(failed) > FAILURE_LIMIT * config.reps:
            raise ReplicationFailure(f"{len(failed)} of {config.reps} replications failed at N={N}: {failed[0]}")
        for res in results:
            if isinstance(res, Exception):
                continue
            for (test, M, season, alpha), rejected in res.items():
                cell = cells.setdefault((test, N, M, season, alpha), Cell(0, 0))
                cell.rejections += int(rejected)
                cell.count += 1
    return RejectionTable(cells, failures, config.to_dict(), kind, config.reference_table())


def run_size(config):
    """Empirical size: simulate under the fitted model's null."""
    return _run(config, "size")


def run_power(config):
    """Empirical power: the fitted orders must be smaller than the true ones."""
    true_p = config.model.spec.p
    fitted = config.fit_spec().p
    if not all(f <= t for f, t in zip(fitted, true_p)) or fitted == true_p:
        raise ValueError("power experiments need fitted orders below the true orders")
    return _run(config, "power")


def _coverage_replication(args):
    config, N, M, alpha, mode, r = args
    rng = np.random.default_rng(replication_seed(config.seed, r))
    data = simulate(config.model, N, config.noise, config.burn_in_years, rng)
    fitted = fit(data, config.fit_spec())
    lagcov = lag_covariances(fitted.residuals, M)
    acov = asymptotic_cov(fitted, M, mode, config.lrv)
    bands = confidence_bands(acov, N, alpha / 2.0)
    inside = sum(int(np.sum(np.abs(lagcov.r[v]) <= bands[v])) for v in range(len(bands)))
    return inside, sum(b.size for b in bands)


def band_coverage(config, N, M, alpha=0.05, mode="weak"):
    """Share of residual autocorrelation entries inside the two-sided
    ``1 - alpha`` bands, pooled over seasons, lags and replications."""
    jobs = [(config, N, M, alpha, mode, r) for r in range(config.reps)]
    workers = worker_count(config.workers)
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_coverage_replication, jobs))
    else:
        results = [_coverage_replication(job) for job in jobs]
    inside = sum(i for i, _ in results)
    total = sum(t for _, t in results)
    return inside / total
