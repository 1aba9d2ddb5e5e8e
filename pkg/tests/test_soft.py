"""Tests for the EM soft-clustering module."""

import math

import numpy as np
import pytest
from scipy.stats import norm

from adaclust.edm import AttributeKind, MorrisCount, MorrisReal, Tweedie
from adaclust.errors import DegenerateComponentError, EmptyClusterError
from adaclust.soft import (
    FitConfig,
    MixtureParams,
    Priors,
    component_log_density,
    e_step,
    fit,
    initialize,
    m_step_alpha,
    m_step_kappa,
    m_step_mu,
    m_step_pi,
)


def _gaussian_params(pi, mu, kappa):
    mu = np.asarray(mu, dtype=float)
    k, j = mu.shape
    return MixtureParams(
        pi=np.asarray(pi, dtype=float),
        mu=mu,
        kappa=np.asarray(kappa, dtype=float),
        alpha=np.zeros(j),
        families=[MorrisReal() for _ in range(j)],
    )


class DiagonalSharedGMM:
    """Independently coded diagonal shared-covariance GMM EM (test oracle).

    Densities go through scipy.stats.norm; updates are the textbook ones with
    the per-attribute variance shared across components.
    """

    def __init__(self, pi, mu, var):
        self.pi = np.asarray(pi, dtype=float)
        self.mu = np.asarray(mu, dtype=float)
        self.var = np.asarray(var, dtype=float)

    def e_step(self, X):
        logp = np.zeros((X.shape[0], len(self.pi)))
        for h in range(len(self.pi)):
            logp[:, h] = norm.logpdf(X, self.mu[h], np.sqrt(self.var)).sum(axis=1)
        logp += np.log(self.pi)
        m = logp.max(axis=1, keepdims=True)
        lse = m + np.log(np.exp(logp - m).sum(axis=1, keepdims=True))
        return np.exp(logp - lse), float(lse.sum())

    def m_step(self, X, resp):
        n = X.shape[0]
        mass = resp.sum(axis=0)
        self.pi = mass / n
        self.mu = (resp.T @ X) / mass[:, None]
        sq = np.zeros(X.shape[1])
        for h in range(len(self.pi)):
            sq += (resp[:, h : h + 1] * (X - self.mu[h]) ** 2).sum(axis=0)
        self.var = sq / n


class TestComponentLogDensity:
    def test_single_gaussian_at_mean(self):
        p = _gaussian_params([1.0], [[0.5]], [1.0])
        val = component_log_density([0.5], [0.5], p)
        assert val == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-12)

    def test_additive_over_attributes(self):
        p = _gaussian_params([1.0], [[0.5, -1.0]], [1.0, 1.0])
        val = component_log_density([0.5, -1.0], [0.5, -1.0], p)
        assert val == pytest.approx(-math.log(2 * math.pi), abs=1e-12)

    def test_inverse_gaussian_attribute(self):
        p = MixtureParams(
            pi=np.array([1.0]),
            mu=np.array([[1.0]]),
            kappa=np.array([1.0]),
            alpha=np.array([-1.0]),
            families=[Tweedie()],
        )
        assert component_log_density([1.0], [1.0], p) == pytest.approx(-0.9189385332, abs=1e-9)


class TestESteps:
    def test_symmetric_components_give_half(self):
        p = _gaussian_params([0.5, 0.5], [[1.0, 2.0], [1.0, 2.0]], [1.0, 1.0])
        X = np.random.default_rng(0).normal(size=(20, 2))
        resp, _ = e_step(X, p)
        np.testing.assert_allclose(resp, 0.5)

    def test_single_component(self):
        p = _gaussian_params([1.0], [[0.0]], [1.0])
        X = np.array([[0.0], [1.0], [-2.0]])
        resp, ll = e_step(X, p)
        np.testing.assert_allclose(resp, 1.0)
        expect = sum(component_log_density(x, [0.0], p) for x in X)
        assert ll == pytest.approx(expect, abs=1e-10)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(1)
        p = _gaussian_params([0.3, 0.7], [[0.0, 0.0], [2.0, -1.0]], [0.5, 2.0])
        X = rng.normal(size=(100, 2))
        resp, _ = e_step(X, p)
        np.testing.assert_allclose(resp.sum(axis=1), 1.0, atol=1e-10)

    def test_matches_independent_gmm(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(50, 3)) + rng.integers(0, 2, size=(50, 1)) * 3
        pi = np.array([0.4, 0.6])
        mu = rng.normal(size=(2, 3))
        var = np.array([0.5, 1.0, 2.0])
        ours, ll_ours = e_step(X, _gaussian_params(pi, mu, var))
        oracle, ll_oracle = DiagonalSharedGMM(pi, mu, var).e_step(X)
        np.testing.assert_allclose(ours, oracle, atol=1e-10)
        assert ll_ours == pytest.approx(ll_oracle, abs=1e-8)

    def test_degenerate_proportion_raises(self):
        p = _gaussian_params([1.0 - 1e-301, 1e-301], [[0.0], [1.0]], [1.0])
        with pytest.raises(DegenerateComponentError):
            e_step(np.array([[0.0]]), p)


class TestMSteps:
    def test_pi_from_hard_assignment(self):
        resp = np.array([[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]])
        np.testing.assert_allclose(m_step_pi(resp), [1.0, 0.0])

    def test_pi_mixed(self):
        resp = np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]])
        np.testing.assert_allclose(m_step_pi(resp), [0.5, 0.5])

    def test_mu_ml_is_weighted_mean(self):
        p = _gaussian_params([1.0], [[0.0]], [1.0])
        X = np.array([[1.0], [3.0]])
        resp = np.ones((2, 1))
        mu = m_step_mu(X, resp, p, Priors.none(1, 1))
        assert mu[0, 0] == pytest.approx(2.0)

    def test_mu_map_formula(self):
        # prior location 2, pseudo-count 1, kappa 1, one sample at 4
        p = _gaussian_params([1.0], [[0.0]], [1.0])
        priors = Priors(
            a_mu=np.array([[2.0]]),
            b_mu=np.array([[1.0]]),
            a_kappa=np.zeros(1),
            b_kappa=np.zeros(1),
        )
        mu = m_step_mu(np.array([[4.0]]), np.ones((1, 1)), p, priors)
        assert mu[0, 0] == pytest.approx(3.0)

    def test_mu_map_zero_priors_equals_ml_bitwise(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(40, 2))
        resp = rng.dirichlet(np.ones(3), size=40)
        p = _gaussian_params(np.ones(3) / 3, np.zeros((3, 2)), np.ones(2))
        ml = m_step_mu(X, resp, p, Priors.none(3, 2))
        zero = Priors(
            a_mu=rng.normal(size=(3, 2)),
            b_mu=np.zeros((3, 2)),
            a_kappa=np.zeros(2),
            b_kappa=np.zeros(2),
        )
        assert np.array_equal(ml, m_step_mu(X, resp, p, zero))

    def test_mu_empty_cluster_raises_without_prior_mass(self):
        p = _gaussian_params([0.5, 0.5], [[0.0], [1.0]], [1.0])
        X = np.array([[1.0], [2.0]])
        resp = np.array([[1.0, 0.0], [1.0, 0.0]])
        with pytest.raises(EmptyClusterError):
            m_step_mu(X, resp, p, Priors.none(2, 1))

    def test_kappa_gaussian_ml_matches_variance(self):
        p = _gaussian_params([1.0], [[1.0]], [1.0])
        X = np.array([[0.0], [2.0]])
        resp = np.ones((2, 1))
        kappa = m_step_kappa(X, resp, np.array([[1.0]]), p, Priors.none(1, 1))
        assert kappa[0] == pytest.approx(1.0)

    def test_kappa_floor_regime(self):
        p = _gaussian_params([1.0], [[2.0]], [1.0])
        X = np.full((10, 1), 2.0)  # all points at the mean, zero divergence
        resp = np.ones((10, 1))
        priors = Priors(
            a_mu=np.array([[2.0]]),
            b_mu=np.zeros((1, 1)),
            a_kappa=np.array([1.0]),
            b_kappa=np.array([1e-9]),
        )
        kappa = m_step_kappa(X, resp, np.array([[2.0]]), p, priors)
        assert kappa[0] == pytest.approx(1e-9 / (1.0 + 5.0), rel=1e-12)

    def test_kappa_map_zero_priors_equals_ml(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(30, 2))
        resp = rng.dirichlet(np.ones(2), size=30)
        p = _gaussian_params([0.5, 0.5], rng.normal(size=(2, 2)), np.ones(2))
        ml = m_step_kappa(X, resp, p.mu, p, Priors.none(2, 2))
        manual = np.empty(2)
        for j in range(2):
            d = 0.5 * (X[:, j : j + 1] - p.mu[:, j][None, :]) ** 2
            manual[j] = 2 * (resp * d).sum() / resp.sum()
        np.testing.assert_allclose(ml, manual, rtol=1e-12)


class TestAlphaRecovery:
    """Single-component fits recover the generating member's hyper-parameter.

    Oracle: grid search of the same objective at resolution 0.01.
    """

    def _oracle(self, X, fam, mu, kappa, lo, hi):
        grid = np.arange(lo, hi + 1e-9, 0.01)
        vals = [-np.sum(fam.log_density(X[:, 0], mu, kappa, a)) for a in grid]
        return grid[int(np.argmin(vals))]

    def _fit_alpha(self, x, fam):
        X = x[:, None]
        resp = np.ones((len(x), 1))
        mu = np.array([[x.mean()]])
        p = MixtureParams(np.array([1.0]), mu, np.ones(1), np.array([fam.default_alpha]), [fam])
        kappa = m_step_kappa(X, resp, mu, p, Priors.none(1, 1))
        for _ in range(8):
            alpha = m_step_alpha(X, resp, mu, kappa, p)
            p.alpha = alpha
            kappa = m_step_kappa(X, resp, mu, p, Priors.none(1, 1))
            p.kappa = kappa
        return p.alpha[0], p.kappa[0], mu[0, 0]

    def test_gaussian_data(self):
        rng = np.random.default_rng(5)
        x = rng.normal(3.0, 1.5, size=1000)
        fam = MorrisReal()
        alpha, kappa, mu = self._fit_alpha(x, fam)
        assert 0.0 <= alpha <= 0.1
        oracle = self._oracle(x[:, None], fam, mu, kappa, 0.0, 2.0)
        assert abs(alpha - oracle) <= 0.05

    def test_poisson_data(self):
        rng = np.random.default_rng(6)
        x = rng.poisson(5.0, size=1000).astype(float)
        fam = MorrisCount(AttributeKind.NON_NEGATIVE_DISCRETE)
        alpha, kappa, mu = self._fit_alpha(x, fam)
        assert 0.0 <= alpha <= 0.15
        oracle = self._oracle(x[:, None], fam, mu, kappa, 0.0, 2.0)
        assert abs(alpha - oracle) <= 0.05

    def test_negative_binomial_data(self):
        rng = np.random.default_rng(7)
        rate = rng.gamma(1.0, 6.0, size=2000)  # alpha = 1, mean 6
        x = rng.poisson(rate).astype(float)
        fam = MorrisCount(AttributeKind.NON_NEGATIVE_DISCRETE)
        alpha, kappa, mu = self._fit_alpha(x, fam)
        assert abs(alpha - 1.0) <= 0.4
        oracle = self._oracle(x[:, None], fam, mu, kappa, 0.0, 3.0)
        assert abs(alpha - oracle) <= 0.1


def _mixed_dataset(rng, n=240):
    labels = rng.integers(0, 2, n)
    X = np.empty((n, 3))
    X[:, 0] = rng.normal(np.where(labels == 0, -3.0, 3.0), 1.0)
    X[:, 1] = rng.poisson(np.where(labels == 0, 2.0, 12.0))
    X[:, 2] = rng.gamma(2.0, np.where(labels == 0, 0.5, 3.0))
    fams = [MorrisReal(), MorrisCount(AttributeKind.NON_NEGATIVE_DISCRETE), Tweedie()]
    return X, labels, fams


class TestFit:
    def test_k1_converges_fast(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(50, 2))
        res = fit(X, [MorrisReal(), MorrisReal()], 1, FitConfig(), seed=0)
        assert res.converged
        assert res.n_iter <= 3
        np.testing.assert_allclose(res.params.pi, [1.0])

    def test_trace_monotone_heterogeneous(self):
        rng = np.random.default_rng(9)
        X, _, fams = _mixed_dataset(rng)
        for seed in range(3):
            res = fit(X, fams, 2, FitConfig(mode="ml"), seed=seed)
            assert np.all(np.diff(res.trace) >= -1e-8)

    def test_map_mode_with_zeroed_priors_reproduces_ml_bitwise(self):
        rng = np.random.default_rng(10)
        X, _, fams = _mixed_dataset(rng)
        cfg_ml = FitConfig(mode="ml")
        res_ml = fit(X, fams, 2, cfg_ml, seed=1)
        cfg_map = FitConfig(mode="map")
        res_map = fit(
            X, fams, 2, cfg_map, seed=1, priors=Priors.none(2, 3)
        )
        # identical seeds give identical inits; zero prior mass must follow
        # the identical floating-point path
        assert np.array_equal(res_ml.trace, res_map.trace)
        assert np.array_equal(res_ml.params.mu, res_map.params.mu)
        assert np.array_equal(res_ml.params.kappa, res_map.params.kappa)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(11)
        X, _, fams = _mixed_dataset(rng)
        cfg = FitConfig(mode="ml")
        params0, _ = initialize(X, fams, 2, np.random.default_rng(3), cfg)
        perm = np.array([1, 0])
        params_p = params0.copy()
        params_p.pi = params_p.pi[perm]
        params_p.mu = params_p.mu[perm]
        res_a = fit(X, fams, 2, cfg, init=params0)
        res_b = fit(X, fams, 2, cfg, init=params_p)
        np.testing.assert_array_equal(res_a.assignments, perm[res_b.assignments])
        np.testing.assert_allclose(res_a.params.mu, res_b.params.mu[perm], rtol=1e-8)

    def test_homogeneous_ties_dispersion_and_alpha(self):
        rng = np.random.default_rng(12)
        X = np.column_stack(
            [
                rng.gamma(2.0, np.where(rng.random(200) < 0.5, 0.5, 2.0)),
                rng.gamma(2.0, 1.0, 200),
            ]
        )
        fams = [Tweedie(), Tweedie()]
        res = fit(X, fams, 2, FitConfig(mode="ml", homogeneous=True), seed=2)
        assert res.params.kappa[0] == res.params.kappa[1]
        assert res.params.alpha[0] == res.params.alpha[1]

    def test_homogeneous_estep_matches_divergence_only_weights(self):
        """With shared family/dispersion/topology the base-measure terms
        cancel from the posterior weights: an implementation using only the
        divergences must give the same responsibilities."""
        rng = np.random.default_rng(13)
        X = rng.gamma(2.0, np.where(rng.random((150, 2)) < 0.5, 0.5, 2.0))
        fam = Tweedie()
        params = MixtureParams(
            pi=np.array([0.4, 0.6]),
            mu=np.array([[1.0, 1.1], [3.5, 4.2]]),
            kappa=np.array([0.7, 0.7]),
            alpha=np.array([0.3, 0.3]),
            families=[fam, fam],
        )
        resp, _ = e_step(X, params)
        logw = np.zeros((150, 2))
        for h in range(2):
            for j in range(2):
                logw[:, h] -= fam.divergence(X[:, j], params.mu[h, j], 0.3) / 0.7
        logw += np.log(params.pi)
        m = logw.max(axis=1, keepdims=True)
        bare = np.exp(logw - m) / np.exp(logw - m).sum(axis=1, keepdims=True)
        np.testing.assert_allclose(resp, bare, atol=1e-10)

    def test_empty_cluster_reseeded(self):
        # second component seeded far outside the data with a tiny dispersion:
        # its responsibilities underflow to exactly zero, forcing a re-seed,
        # which should land on the one real outlier
        X = np.vstack([np.random.default_rng(14).normal(0, 0.1, size=(30, 1)), [[50.0]]])
        params0 = _gaussian_params([0.5, 0.5], [[0.0], [1000.0]], [0.01])
        res = fit(X, [MorrisReal()], 2, FitConfig(mode="ml", max_iter=50), init=params0)
        assert len(np.unique(res.assignments)) == 2
        assert res.assignments[-1] != res.assignments[0]


class TestGmmEquivalence:
    def test_per_iteration_match(self):
        """gaussian_only runs the identical update cycle as an independently
        implemented diagonal shared-covariance GMM EM."""
        rng = np.random.default_rng(15)
        X = rng.normal(size=(200, 5)) + 2.0 * rng.integers(0, 3, size=(200, 1))
        k = 3
        pi = np.ones(k) / k
        mu = X[rng.choice(200, k, replace=False)]
        var = np.ones(5)

        ours = _gaussian_params(pi.copy(), mu.copy(), var.copy())
        oracle = DiagonalSharedGMM(pi.copy(), mu.copy(), var.copy())
        priors = Priors.none(k, 5)
        for _ in range(25):
            resp, ll = e_step(X, ours)
            o_resp, o_ll = oracle.e_step(X)
            np.testing.assert_allclose(resp, o_resp, atol=1e-8)
            assert ll == pytest.approx(o_ll, abs=1e-8)
            ours.pi = m_step_pi(resp)
            ours.mu = m_step_mu(X, resp, ours, priors)
            ours.kappa = m_step_kappa(X, resp, ours.mu, ours, priors)
            oracle.m_step(X, o_resp)
            np.testing.assert_allclose(ours.pi, oracle.pi, atol=1e-8)
            np.testing.assert_allclose(ours.mu, oracle.mu, atol=1e-8)
            np.testing.assert_allclose(ours.kappa, oracle.var, atol=1e-8)

    def test_fit_trace_matches_oracle(self):
        rng = np.random.default_rng(16)
        X = rng.normal(size=(120, 3)) + 3.0 * rng.integers(0, 2, size=(120, 1))
        cfg = FitConfig(mode="ml", gaussian_only=True, max_iter=40)
        params0, _ = initialize(X, [MorrisReal()] * 3, 2, np.random.default_rng(7), cfg)
        res = fit(X, [MorrisReal()] * 3, 2, cfg, init=params0)

        oracle = DiagonalSharedGMM(params0.pi.copy(), params0.mu.copy(), params0.kappa.copy())
        lls = []
        for _ in range(len(res.trace)):
            resp, ll = oracle.e_step(X)
            lls.append(ll)
            oracle.m_step(X, resp)
        np.testing.assert_allclose(res.trace, lls, atol=1e-8)
