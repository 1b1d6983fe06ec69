import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from pvar.diagnostics import (
    AsymptoticCov,
    CovMode,
    _loading,
    asymptotic_cov,
    autocorrelations_kron,
    confidence_bands,
    correction_factor,
    delta_four_term,
    diagnose,
    lag_covariances,
    portmanteau,
    portmanteau_pair,
    upsilon_hat,
    w_process,
)
from pvar.estimate import fit, fit_ols
from pvar.exceptions import DegenerateVariance, InvalidFactor
from pvar.lrv import LrvConfig, hac_lrv
from pvar.model import PvarModel, PvarSpec, SeriesData, ma_infinity, simulate
from pvar.montecarlo import dgp_catalog


@pytest.fixture(scope="module")
def strong_fit():
    model = dgp_catalog("dgp1")
    return fit(simulate(model, 400, "strong", seed=21), model.spec)


@pytest.fixture(scope="module")
def weak_fit():
    model = dgp_catalog("dgp1")
    return fit(simulate(model, 400, "weak", seed=22), model.spec)


def white_fit(N, d=2, s=2, seed=0, noise="strong"):
    model = PvarModel.from_arrays([[] for _ in range(s)], [np.eye(d)] * s)
    return fit(simulate(model, N, noise, seed=seed), PvarSpec(s, d, (0,) * s))


def classical_acf(x, h):
    return np.sum(x[h:] * x[:-h]) / np.sum(x * x)


class TestLagCovariances:
    def test_hand_example(self):
        e = SeriesData(np.array([[1.0, 2.0, -1.0, 1.0, 0.0, -2.0]]), 2)
        lc = lag_covariances(e, 1)
        assert_allclose(lc.C[0][1], [[-2.0 / 3.0]])
        # the sum starts at year h, so the year-0 pair (2)(1) is left out
        assert_allclose(lc.C[1][1], [[(1 * -1 + -2 * 0) / 3.0]])

    def test_lag_zero_is_second_moment(self):
        E = np.random.default_rng(0).standard_normal((2, 60))
        lc = lag_covariances(SeriesData(E, 3), 2)
        for v in range(3):
            x = E[:, v::3]
            assert_allclose(lc.C[v][0], x @ x.T / 20)

    def test_univariate_single_season_reduction(self):
        x = np.random.default_rng(1).standard_normal(300)
        lc = lag_covariances(SeriesData(x[None, :], 1), 5)
        assert_allclose(lc.r[0], [classical_acf(x, h) for h in range(1, 6)], atol=1e-14)

    def test_negative_lag_accessor(self):
        E = np.random.default_rng(2).standard_normal((2, 40))
        lc = lag_covariances(SeriesData(E, 4), 3)
        assert_array_equal(lc.cov(-2, 1), lc.C[3][2].T)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 4), st.integers(1, 3), st.integers(1, 4), st.integers(0, 10_000))
    def test_dual_construction(self, s, d, M, seed):
        E = np.random.default_rng(seed).standard_normal((d, s * (M + 6)))
        lc = lag_covariances(SeriesData(E, s), M)
        for v in range(s):
            assert np.max(np.abs(autocorrelations_kron(lc, v) - lc.r[v])) <= 1e-12
            assert np.all(np.abs(lc.r[v]) <= 1 + 1e-10)

    def test_degenerate(self):
        E = np.ones((2, 20))
        E[1, ::2] = 0.0
        with pytest.raises(DegenerateVariance) as info:
            lag_covariances(SeriesData(E, 2), 1)
        assert (info.value.season, info.value.component) == (1, 2)


class TestCorrectionFactor:
    def test_divisible_branch(self):
        assert_allclose(correction_factor(4, 1, 100, 4), 102 / 99)

    def test_other_branch(self):
        assert_allclose(correction_factor(1, 1, 100, 4), 100 / 99)
        assert_allclose(correction_factor(3, 2, 100, 4), 100 / 99)
        assert_allclose(correction_factor(1, 2, 100, 4), 1.0)

    def test_limit(self):
        for l in range(1, 13):
            for v in range(1, 5):
                assert abs(correction_factor(l, v, 100_000, 4) - 1) < 1e-3

    def test_invalid(self):
        with pytest.raises(InvalidFactor):
            correction_factor(8, 1, 2, 4)


class TestPortmanteau:
    def test_zero_autocovariance(self):
        # one nonzero residual per season has no lagged partner
        E = np.zeros((1, 12))
        E[0, :4] = [1.0, 2.0, 3.0, 4.0]
        lc = lag_covariances(SeriesData(E, 4), 2)
        assert_array_equal(portmanteau(lc), 0.0)

    def test_box_pierce_reduction(self):
        x = np.random.default_rng(3).standard_normal(500)
        lc = lag_covariances(SeriesData(x[None, :], 1), 6)
        bp = 500 * sum(classical_acf(x, h) ** 2 for h in range(1, 7))
        assert_allclose(portmanteau(lc)[0], bp, rtol=1e-12)

    def test_corrected_weighting(self):
        x = np.random.default_rng(4).standard_normal((2, 80))
        lc = lag_covariances(SeriesData(x, 4), 5)
        base = [portmanteau(lag_covariances(SeriesData(x, 4), l)) for l in range(0 + 1, 6)]
        terms = np.diff(np.vstack([np.zeros(4)] + base), axis=0)
        factors = np.array([[correction_factor(l, v, 20, 4) for v in range(1, 5)] for l in range(1, 6)])
        assert_allclose(portmanteau(lc, corrected=True), (terms * factors).sum(axis=0), rtol=1e-12)

    def test_global_is_sum(self, strong_fit):
        vals = portmanteau_pair(lag_covariances(strong_fit.residuals, 6))
        assert vals.global_Q == pytest.approx(vals.Q.sum(), rel=0, abs=1e-12 * vals.global_Q)
        assert vals.global_Q_star == pytest.approx(vals.Q_star.sum(), rel=0, abs=1e-12 * vals.global_Q_star)
        assert np.all(vals.Q_star >= vals.Q)

    @settings(max_examples=25, deadline=None)
    @given(st.floats(1e-3, 1e3), st.booleans(), st.integers(0, 10_000))
    def test_scale_invariance(self, c, negative, seed):
        c = -c if negative else c
        E = np.random.default_rng(seed).standard_normal((2, 120))
        base = portmanteau_pair(lag_covariances(SeriesData(E, 4), 4))
        scaled = portmanteau_pair(lag_covariances(SeriesData(c * E, 4), 4))
        assert np.max(np.abs(scaled.Q - base.Q)) <= 1e-10 * max(1.0, base.Q.max())
        assert np.max(np.abs(scaled.Q_star - base.Q_star)) <= 1e-10 * max(1.0, base.Q_star.max())


class TestAsymptoticCov:
    def test_delta_four_term_identity(self, weak_fit):
        for constrained in (False, True):
            if constrained:
                R = np.eye(4)[:, [0, 3]]
                spec = PvarSpec(4, 2, (1,) * 4, tuple((R, np.zeros(4)) for _ in range(4)))
                res = fit(weak_fit.data, spec)
            else:
                res = weak_fit
            for v in range(4):
                W, k = w_process(res, v, 3, constrained)
                L = _loading(res, v, 3, constrained)
                xi = hac_lrv(W, LrvConfig(method="hac", bandwidth=5))
                factored = L @ xi @ L.T
                assert np.max(np.abs(factored - delta_four_term(xi, L, k))) <= 1e-10

    def test_white_noise_strong_is_identity(self):
        res = white_fit(300)
        acov = asymptotic_cov(res, 3, "strong")
        for v in range(2):
            assert_allclose(acov.nabla[v], np.eye(12), atol=1e-12)
            assert_allclose(acov.eigenvalues[v], 1.0, atol=1e-12)

    def test_white_noise_equal_weights_match_chi2(self):
        rep = diagnose(white_fit(200, seed=1), 2, "strong")
        for season in rep.seasons:
            assert season.df == 8
            assert abs(season.p_weak - season.p_strong) < 1e-6

    def test_upsilon_matches_ma_expression(self):
        model = dgp_catalog("dgp1")
        res = fit(simulate(model, 20000, seed=23), model.spec)
        F = ma_infinity(model, 4).F
        M = 3
        for v in range(4):
            # E[Y_{t-1} e_{t-l}^T] = F_{l-1}(v-1) Sigma(v-l)
            A = np.hstack([F[(v - 1) % 4, l - 1] @ model.sigma_eps[(v - l) % 4] for l in range(1, M + 1)])
            expected = -np.kron(A.T, np.eye(2))
            assert np.max(np.abs(upsilon_hat(res, v, M) - expected)) < 0.05

    def test_strong_trace_projection(self):
        model = dgp_catalog("dgp1")
        res = fit(simulate(model, 5000, seed=24), model.spec)
        acov = asymptotic_cov(res, 10, "strong")
        for v in range(4):
            assert abs(np.trace(acov.nabla[v]) - 36) < 0.15 * 36

    def test_weak_approaches_strong_on_iid(self):
        model = dgp_catalog("dgp1")
        gaps = []
        for N in (1000, 5000):
            res = fit(simulate(model, N, seed=25), model.spec)
            weak = asymptotic_cov(res, 2, "weak", LrvConfig(r_max=3))
            strong = asymptotic_cov(res, 2, "strong")
            gaps.append(max(np.abs(weak.delta[v] - strong.delta[v]).max() for v in range(4)))
        assert gaps[1] < gaps[0]

    def test_brute_force_blocks(self):
        # s=2, d=1, p=(1,1), M=2, N=50: rebuild W by hand and sum lagged
        # cross products directly
        model = PvarModel.from_arrays([[[[0.4]]], [[[-0.3]]]], [[[1.0]], [[2.0]]])
        res = fit(simulate(model, 50, "weak", seed=26), model.spec)
        e = res.residuals.values[0]
        y = res.data.values[0]
        for v in range(2):
            rows = []
            for n in range(50):
                t = 2 * n + v
                lag = lambda k, arr: arr[t - k] if t - k >= 0 else 0.0
                x = lag(1, y) if n or v else 0.0
                rows.append([x * e[t] / res.omega_hat[v][0, 0], lag(1, e) * e[t], lag(2, e) * e[t]])
            W = np.array(rows)
            W -= W.mean(axis=0)
            oracle = np.zeros((3, 3))
            for h in range(-10, 11):
                w = 1 - abs(h) / 11
                for n in range(50):
                    if 0 <= n - h < 50:
                        oracle += w * np.outer(W[n], W[n - h])
            oracle /= 50
            mine, k = w_process(res, v, 2)
            assert k == 1
            assert_allclose(hac_lrv(mine, LrvConfig(method="hac", bandwidth=10)), oracle, atol=1e-10)

    def test_global_dimensions_and_blocks(self, weak_fit):
        acov = asymptotic_cov(weak_fit, 2, "weak", LrvConfig(r_max=2), global_=True)
        assert acov.global_nabla.shape == (32, 32)
        assert acov.global_eigenvalues.size == 32
        strong = asymptotic_cov(weak_fit, 2, "strong", global_=True)
        for v in range(4):
            assert_allclose(strong.global_delta[8 * v:8 * v + 8, 8 * v:8 * v + 8], strong.delta[v])

    def test_psd_after_clipping(self, weak_fit):
        for mode in ("strong", "weak"):
            acov = asymptotic_cov(weak_fit, 4, mode, LrvConfig(r_max=2))
            for v in range(4):
                assert np.all(acov.eigenvalues[v] >= 0)
                assert_allclose(acov.delta[v], acov.delta[v].T, atol=1e-8)

    def test_mode_resolution(self, strong_fit):
        assert CovMode.resolve("weak", strong_fit) is CovMode.WEAK_U
        R = np.eye(4)
        spec = PvarSpec(4, 2, (1,) * 4, tuple((R, np.zeros(4)) for _ in range(4)))
        res = fit(strong_fit.data, spec)
        assert CovMode.resolve("strong", res) is CovMode.STRONG_R

    def test_strong_r_identity_matches_strong_u(self, strong_fit):
        spec = PvarSpec(4, 2, (1,) * 4, tuple((np.eye(4), np.zeros(4)) for _ in range(4)))
        res = fit(strong_fit.data, spec)
        u = asymptotic_cov(strong_fit, 3, "strong")
        r = asymptotic_cov(res, 3, "strong")
        for v in range(4):
            assert_allclose(r.delta[v], u.delta[v], atol=1e-8)


class TestBands:
    def test_arithmetic(self):
        acov = AsymptoticCov(CovMode.STRONG_U, 1, [], [], [np.eye(3)], [], [])
        band = confidence_bands(acov, 400, 0.025)[0]
        assert_allclose(band, 1.959963984540054 / 20)
        assert_allclose(band, 0.098, atol=1e-4)

    def test_white_noise_band(self):
        rep = diagnose(white_fit(900, seed=2), 2, "strong", band_alpha=0.05)
        for season in rep.seasons:
            assert_allclose(season.band, 1.959963984540054 / 30, rtol=1e-12)


class TestReport:
    def test_not_applicable_when_M_le_p(self):
        model = dgp_catalog("dgp3")
        res = fit(simulate(model, 200, seed=27), model.spec)
        rep = diagnose(res, 2, "weak", LrvConfig(r_max=2))
        for season in rep.seasons:
            assert season.df is None and season.p_strong is None
            assert 0 <= season.p_weak <= 1
        assert "n.a." in rep.to_csv()

    def test_serialization(self, weak_fit):
        rep = diagnose(weak_fit, 3, "weak", LrvConfig(r_max=2), global_=True, band_alpha=0.05)
        doc = rep.to_dict()
        assert len(doc["seasons"]) == 4
        assert doc["global"]["df"] == 4 * 4 * 2
        assert doc["band_level"] == pytest.approx(0.95)
        lines = rep.to_csv().splitlines()
        assert lines[0].split(",") == ["season", "M", "Q", "Q_star", "df", "p_strong", "p_weak",
                                       "n_clipped_eigenvalues"]
        assert len(lines) == 6
        band_lines = rep.bands_csv().splitlines()
        assert len(band_lines) == 1 + 4 * 12
        for season in doc["seasons"]:
            assert 0 <= season["p_weak"] <= 1
            assert season["Q_star"] >= season["Q"]
