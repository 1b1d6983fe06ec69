"""Residual autocorrelation diagnostics for fitted PVAR models.

Per season v the lag-h residual autocovariance is

    C(h; v) = N^-1 sum_{n=h}^{N-1} e_{ns+v} e_{ns+v-h}^T,

and the portmanteau statistic ``Q_M(v)`` aggregates lags 1..M. Its null law is
a weighted chi-squared whose weights are the eigenvalues of
``J^-1/2 Delta J^-1/2``, with ``Delta`` the asymptotic covariance of the
stacked autocovariances. ``Delta`` is estimated from closed forms under iid
innovations and from the long-run variance of an auxiliary process otherwise.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .estimate import gls_weights, score_process
from .exceptions import DegenerateVariance, InvalidFactor, SingularC0, SingularJ
from .lrv import LrvConfig, clip_psd, long_run_variance
from .model import shift
from .quadform import WeightedChiSq, imhof

GLOBAL_LRV = LrvConfig(order=1)


class CovMode(str, enum.Enum):
    STRONG_U = "strong_u"
    STRONG_R = "strong_r"
    WEAK_U = "weak_u"
    WEAK_R = "weak_r"

    @property
    def weak(self):
        return self in (CovMode.WEAK_U, CovMode.WEAK_R)

    @property
    def constrained(self):
        return self in (CovMode.STRONG_R, CovMode.WEAK_R)

    @classmethod
    def resolve(cls, mode, fit_result):
        """Map "strong"/"weak" plus the fit's constraint status to a mode."""
        if isinstance(mode, CovMode):
            return mode
        constrained = fit_result.mode == "constrained"
        if mode == "strong":
            return cls.STRONG_R if constrained else cls.STRONG_U
        if mode == "weak":
            return cls.WEAK_R if constrained else cls.WEAK_U
        return cls(mode)


# --- autocovariances ----------------------------------------------------------

@dataclass
class LagCovSet:
    """``C[v][h]`` for h = 0..M, ``D[v]`` the residual standard deviations,
    ``c[v]`` and ``r[v]`` the stacked column-major vectors over lags 1..M."""

    M: int
    N: int
    s: int
    C: list
    D: list
    c: list
    r: list

    def cov(self, h, v):
        """C(h; v), with ``C(-h; v) = C(h; v - h)^T`` for negative lags."""
        if h >= 0:
            return self.C[v][h]
        return self.C[(v + h) % self.s][-h].T


def lag_covariances(residuals, M):
    if M < 1 or residuals.N <= M:
        raise ValueError(f"need 1 <= M < N, got M={M}, N={residuals.N}")
    E, s, N, d = residuals.values, residuals.s, residuals.N, residuals.d
    C = []
    for v in range(s):
        cur = E[:, v::s]
        C.append(np.stack([cur[:, h:] @ shift(E, h)[:, v::s][:, h:].T / N for h in range(M + 1)]))
    D = []
    for v in range(s):
        diag = np.diag(C[v][0])
        bad = np.flatnonzero(diag <= 0)
        if bad.size:
            raise DegenerateVariance(v + 1, int(bad[0]) + 1)
        D.append(np.sqrt(diag))
    c, r = [], []
    for v in range(s):
        c.append(np.concatenate([C[v][h].ravel(order="F") for h in range(1, M + 1)]))
        r.append(np.concatenate([(C[v][h] / np.outer(D[v], D[(v - h) % s])).ravel(order="F")
                                 for h in range(1, M + 1)]))
    return LagCovSet(M, N, s, C, D, c, r)


def autocorrelations_kron(lagcov, v):
    """``r(v)`` rebuilt as ``(D^-1(v-h) kron D^-1(v)) c(h; v)`` lag by lag."""
    d = lagcov.D[v].size
    out = []
    for h in range(1, lagcov.M + 1):
        scale = np.kron(np.diag(1.0 / lagcov.D[(v - h) % lagcov.s]), np.diag(1.0 / lagcov.D[v]))
        out.append(scale @ lagcov.c[v][(h - 1) * d * d:h * d * d])
    return np.concatenate(out)


# --- per-season building blocks -----------------------------------------------

def residual_lags(fit_result, v, M):
    """dM x N stack of ``(e_{ns+v-1}; ...; e_{ns+v-M})`` with presample zeros."""
    E, s = fit_result.residuals.values, fit_result.spec.s
    return np.vstack([shift(E, h)[:, v::s] for h in range(1, M + 1)])


def lagged_sigma_hat(fit_result, v, M):
    """``Sigma_hat(v - h)`` for h = 0..M, each the 1/N second moment of the
    flat-time-shifted residuals."""
    E, s, N = fit_result.residuals.values, fit_result.spec.s, fit_result.N
    out = []
    for h in range(M + 1):
        lagged = shift(E, h)[:, v::s]
        out.append(lagged @ lagged.T / N)
    return out


def upsilon_hat(fit_result, v, M):
    """``-(1/N) sum_n (lagged residual stack) kron X_n^T kron I_d``."""
    A_t = residual_lags(fit_result, v, M) @ fit_result.blocks.X[v].T / fit_result.N
    return -np.kron(A_t, np.eye(fit_result.spec.d))


def w_process(fit_result, v, M, constrained=False):
    """Auxiliary process whose long-run variance gives Theta, G and V.

    Rows are years; the first block is the estimator's influence term, the
    second ``(lagged residual stack) kron e_{ns+v}``.
    """
    E = fit_result.residuals.season(v)
    lags = residual_lags(fit_result, v, M)
    second = (lags.T[:, :, None] * E.T[:, None, :]).reshape(E.shape[1], -1)
    if not fit_result.spec.p[v]:
        return second, 0
    score = score_process(fit_result, v)
    if constrained:
        _, H = gls_weights(fit_result, v)
        first = score @ H.T
    else:
        d = fit_result.spec.d
        first = score @ np.kron(np.linalg.inv(fit_result.omega_hat[v]), np.eye(d))
    return np.hstack([first, second]), first.shape[1]


def _loading(fit_result, v, M, constrained):
    """``[Upsilon R | I]``, with R the identity when unconstrained."""
    d = fit_result.spec.d
    eye = np.eye(d * d * M)
    if not fit_result.spec.p[v]:
        return eye
    ups = upsilon_hat(fit_result, v, M)
    if constrained:
        ups = ups @ fit_result.spec.constraint(v)[0]
    return np.hstack([ups, eye])


def delta_four_term(xi, loading, k):
    """``V + U Theta U^T + U G + G^T U^T`` read off the joint LRV blocks."""
    ups = loading[:, :k]
    theta, g, V = xi[:k, :k], xi[:k, k:], xi[k:, k:]
    return V + ups @ theta @ ups.T + ups @ g + g.T @ ups.T


def _strong_delta(fit_result, v, M, constrained, sig):
    d = fit_result.spec.d
    V = np.kron(_blockdiag(sig[1:]), sig[0])
    if not fit_result.spec.p[v]:
        return V
    A = fit_result.blocks.X[v] @ residual_lags(fit_result, v, M).T / fit_result.N
    if not constrained:
        return V - np.kron(A.T @ np.linalg.solve(fit_result.omega_hat[v], A), sig[0])
    R, _ = fit_result.spec.constraint(v)
    S_inv = np.linalg.inv(sig[0])
    inner = np.linalg.inv(R.T @ np.kron(fit_result.omega_hat[v], S_inv) @ R)
    AR = np.kron(A.T, np.eye(d)) @ R
    return V - AR @ inner @ AR.T


def _blockdiag(mats):
    size = sum(m.shape[0] for m in mats)
    out = np.zeros((size, size))
    i = 0
    for m in mats:
        k = m.shape[0]
        out[i:i + k, i:i + k] = m
        i += k
    return out


def _inv_sqrt(m, season):
    vals, vecs = np.linalg.eigh(0.5 * (m + m.T))
    if vals[0] <= 1e-14 * max(vals[-1], 1e-300):
        raise SingularJ(season)
    return (vecs / np.sqrt(vals)) @ vecs.T


def j_inv_sqrt(sig, season):
    """``J^-1/2`` with ``J = blockdiag(Sigma(v-1..v-M)) kron Sigma(v)``."""
    root = _inv_sqrt(sig[0], season)
    return np.kron(_blockdiag([_inv_sqrt(m, season) for m in sig[1:]]), root)


def _corr_scale(sig):
    """Diagonal of ``blockdiag(D(v-1..v-M)) kron D(v)`` inverted."""
    sd = [np.sqrt(np.diag(m)) for m in sig]
    return 1.0 / np.concatenate([np.kron(x, sd[0]) for x in sd[1:]])


def _eigen(m):
    vals = np.linalg.eigvalsh(0.5 * (m + m.T))[::-1]
    neg = int(np.sum(vals < 0))
    return np.clip(vals, 0.0, None), neg


@dataclass
class AsymptoticCov:
    """Estimated asymptotic covariances of the residual autocovariances.

    ``nabla[v] = J^-1/2 Delta J^-1/2`` supplies the null weights;
    ``nabla_corr[v]`` is the same matrix normalized by standard deviations
    only, i.e. the covariance of the scaled autocorrelations used by bands.
    """

    mode: CovMode
    M: int
    delta: list
    nabla: list
    nabla_corr: list
    eigenvalues: list
    n_clipped: list
    global_delta: np.ndarray | None = None
    global_nabla: np.ndarray | None = None
    global_eigenvalues: np.ndarray | None = None
    global_n_clipped: int = 0
    xi: list = field(default_factory=list, repr=False)


def asymptotic_cov(fit_result, M, mode="weak", lrv_cfg=LrvConfig(), global_=False, global_lrv_cfg=GLOBAL_LRV):
    mode = CovMode.resolve(mode, fit_result)
    s, d = fit_result.spec.s, fit_result.spec.d
    deltas, nablas, corrs, eigs, clipped, xis = [], [], [], [], [], []
    sigs, loadings, ws = [], [], []
    for v in range(s):
        sig = lagged_sigma_hat(fit_result, v, M)
        sigs.append(sig)
        if mode.weak:
            W, k = w_process(fit_result, v, M, mode.constrained)
            L = _loading(fit_result, v, M, mode.constrained)
            ws.append(W)
            loadings.append(L)
            xi = long_run_variance(W, lrv_cfg)
            xis.append(xi)
            delta = L @ xi @ L.T
        else:
            delta = _strong_delta(fit_result, v, M, mode.constrained, sig)
        delta = 0.5 * (delta + delta.T)
        root = j_inv_sqrt(sig, v + 1)
        nabla = root @ delta @ root
        scale = _corr_scale(sig)
        vals, neg = _eigen(nabla)
        deltas.append(delta)
        nablas.append(0.5 * (nabla + nabla.T))
        corrs.append(delta * np.outer(scale, scale))
        eigs.append(vals)
        clipped.append(neg)
    out = AsymptoticCov(mode, M, deltas, nablas, corrs, eigs, clipped, xi=xis)
    if global_:
        if mode.weak:
            xi_g = long_run_variance(np.hstack(ws), global_lrv_cfg)
            L_g = _blockdiag_rect(loadings)
            delta_g = L_g @ xi_g @ L_g.T
        else:
            delta_g = _blockdiag(deltas)
        delta_g = 0.5 * (delta_g + delta_g.T)
        root_g = _blockdiag([j_inv_sqrt(sigs[v], v + 1) for v in range(s)])
        nabla_g = root_g @ delta_g @ root_g
        out.global_delta = delta_g
        out.global_nabla = 0.5 * (nabla_g + nabla_g.T)
        out.global_eigenvalues, out.global_n_clipped = _eigen(nabla_g)
    return out


def _blockdiag_rect(mats):
    rows = sum(m.shape[0] for m in mats)
    cols = sum(m.shape[1] for m in mats)
    out = np.zeros((rows, cols))
    i = j = 0
    for m in mats:
        out[i:i + m.shape[0], j:j + m.shape[1]] = m
        i += m.shape[0]
        j += m.shape[1]
    return out


# --- statistics ----------------------------------------------------------------

def correction_factor(l, season, N, s):
    """Finite-sample factor for lag l of 1-based ``season``:
    ``(N+2)/(N-l/s)`` when s divides l, else ``N/(N-floor((l-season+s)/s))``."""
    if l % s == 0:
        denom = N - l / s
        if denom <= 0:
            raise InvalidFactor(f"N - l/s = {denom} for l={l}, N={N}, s={s}")
        return (N + 2) / denom
    denom = N - (l - season + s) // s
    if denom <= 0:
        raise InvalidFactor(f"nonpositive denominator for l={l}, season={season}, N={N}, s={s}")
    return N / denom


@dataclass
class PortmanteauValues:
    """Per-season statistics (index v is season v + 1) and their sums."""

    Q: np.ndarray
    Q_star: np.ndarray

    @property
    def global_Q(self):
        return float(self.Q.sum())

    @property
    def global_Q_star(self):
        return float(self.Q_star.sum())


def portmanteau(lagcov, M=None, corrected=False):
    """``Q_M(v) = N sum_l tr(C(l)^T C(0;v)^-1 C(l) C(0;v-l)^-1)``.

    Returns the per-season values; with ``corrected`` each lag term is
    multiplied by :func:`correction_factor`. :func:`portmanteau_pair`
    returns both versions at once.
    """
    vals = portmanteau_pair(lagcov, M)
    return vals.Q_star if corrected else vals.Q


def portmanteau_pair(lagcov, M=None):
    M = lagcov.M if M is None else M
    if M > lagcov.M:
        raise ValueError(f"lag covariances only reach {lagcov.M}")
    s, N = lagcov.s, lagcov.N
    try:
        inv0 = [np.linalg.inv(lagcov.C[v][0]) for v in range(s)]
    except np.linalg.LinAlgError:
        raise SingularC0("a lag-0 residual covariance is singular") from None
    Q = np.zeros(s)
    Qs = np.zeros(s)
    for v in range(s):
        for l in range(1, M + 1):
            C = lagcov.C[v][l]
            term = np.trace(C.T @ inv0[v] @ C @ inv0[(v - l) % s])
            Q[v] += term
            Qs[v] += correction_factor(l, v + 1, N, s) * term
    return PortmanteauValues(N * Q, N * Qs)


def strong_df(spec, v, M):
    """``d^2 M - K(v)``, which is ``d^2 (M - p(v))`` without constraints."""
    return spec.d * spec.d * M - spec.n_free(v)


def confidence_bands(acov, N, alpha):
    """Half-widths ``u sqrt(diag) / sqrt(N)`` with u the standard normal
    ``1 - alpha`` quantile; pass alpha/2 for a two-sided 1 - alpha band."""
    u = stats.norm.ppf(1.0 - alpha)
    return [u * np.sqrt(np.clip(np.diag(m), 0, None)) / math.sqrt(N) for m in acov.nabla_corr]


@dataclass
class SeasonReport:
    season: int
    Q: float
    Q_star: float
    df: int | None
    p_strong: float | None
    p_strong_star: float | None
    weights: np.ndarray
    n_clipped: int
    p_weak: float
    p_weak_star: float
    r: np.ndarray
    band: np.ndarray | None = None


@dataclass
class GlobalReport:
    Q: float
    Q_star: float
    df: int | None
    p_strong: float | None
    p_strong_star: float | None
    weights: np.ndarray | None
    n_clipped: int
    p_weak: float | None
    p_weak_star: float | None


@dataclass
class PortmanteauReport:
    M: int
    mode: CovMode
    N: int
    seasons: list
    global_: GlobalReport | None = None
    band_alpha: float | None = None
    config: dict = field(default_factory=dict)

    def to_dict(self):
        def num(x):
            return None if x is None else float(x)

        out = {
            "M": self.M, "mode": self.mode.value, "N": self.N, "config": self.config,
            "seasons": [{
                "season": r.season, "Q": r.Q, "Q_star": r.Q_star, "df": r.df,
                "p_strong": num(r.p_strong), "p_strong_star": num(r.p_strong_star),
                "weights": r.weights.tolist(), "n_clipped_eigenvalues": r.n_clipped,
                "p_weak": r.p_weak, "p_weak_star": r.p_weak_star,
                "autocorrelations": r.r.tolist(),
                "band_half_width": None if r.band is None else r.band.tolist(),
            } for r in self.seasons],
        }
        if self.band_alpha is not None:
            out["band_level"] = 1.0 - self.band_alpha
        if self.global_ is not None:
            g = self.global_
            out["global"] = {
                "Q": g.Q, "Q_star": g.Q_star, "df": g.df, "p_strong": num(g.p_strong),
                "p_strong_star": num(g.p_strong_star),
                "weights": None if g.weights is None else g.weights.tolist(),
                "n_clipped_eigenvalues": g.n_clipped, "p_weak": num(g.p_weak),
                "p_weak_star": num(g.p_weak_star),
            }
        return out

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["season", "M", "Q", "Q_star", "df", "p_strong", "p_weak", "n_clipped_eigenvalues"])
        rows = [(r.season, r.Q, r.Q_star, r.df, r.p_strong_star, r.p_weak_star, r.n_clipped) for r in self.seasons]
        if self.global_ is not None:
            g = self.global_
            rows.append(("global", g.Q, g.Q_star, g.df, g.p_strong_star, g.p_weak_star, g.n_clipped))
        for season, q, qs, df, ps, pw, nc in rows:
            w.writerow([season, self.M, _fmt(q), _fmt(qs), "n.a." if df is None else df,
                        "n.a." if ps is None else _fmt(ps), "n.a." if pw is None else _fmt(pw), nc])
        return buf.getvalue()

    def bands_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["season", "lag", "entry", "r", "lower", "upper"])
        for rep in self.seasons:
            if rep.band is None:
                continue
            dd = rep.r.size // self.M
            for idx, (val, half) in enumerate(zip(rep.r, rep.band)):
                w.writerow([rep.season, idx // dd + 1, idx % dd + 1, _fmt(val), _fmt(-half), _fmt(half)])
        return buf.getvalue()


def _fmt(x):
    return format(float(x), ".17g")


def _chi2_p(q, df):
    return None if df is None else float(stats.chi2.sf(q, df))


def diagnose(fit_result, M, mode="weak", lrv_cfg=LrvConfig(), global_=False, band_alpha=None,
             global_lrv_cfg=GLOBAL_LRV, lagcov=None, acov=None):
    """Full portmanteau report for one lag choice M."""
    spec, N = fit_result.spec, fit_result.N
    lagcov = lagcov if lagcov is not None else lag_covariances(fit_result.residuals, M)
    acov = acov if acov is not None else asymptotic_cov(fit_result, M, mode, lrv_cfg, global_, global_lrv_cfg)
    vals = portmanteau_pair(lagcov, M)
    bands = confidence_bands(acov, N, band_alpha / 2.0) if band_alpha is not None else None
    seasons = []
    for v in range(spec.s):
        df = strong_df(spec, v, M)
        df = df if df > 0 else None
        dist = WeightedChiSq(acov.eigenvalues[v])
        seasons.append(SeasonReport(
            v + 1, float(vals.Q[v]), float(vals.Q_star[v]), df,
            _chi2_p(vals.Q[v], df), _chi2_p(vals.Q_star[v], df),
            dist.weights, acov.n_clipped[v],
            imhof(dist, vals.Q[v]).p, imhof(dist, vals.Q_star[v]).p,
            lagcov.r[v], None if bands is None else bands[v]))
    glob = None
    if global_:
        dfs = [strong_df(spec, v, M) for v in range(spec.s)]
        df = sum(dfs) if sum(dfs) > 0 else None
        p_w = p_ws = weights = None
        if acov.global_eigenvalues is not None:
            dist = WeightedChiSq(acov.global_eigenvalues)
            weights = dist.weights
            p_w, p_ws = imhof(dist, vals.global_Q).p, imhof(dist, vals.global_Q_star).p
        glob = GlobalReport(vals.global_Q, vals.global_Q_star, df, _chi2_p(vals.global_Q, df),
                            _chi2_p(vals.global_Q_star, df), weights, acov.global_n_clipped, p_w, p_ws)
    return PortmanteauReport(M, acov.mode, N, seasons, glob, band_alpha)
