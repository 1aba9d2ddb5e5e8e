"""EM clustering for heterogeneous mixtures of steep EDMs.

The mixture shares dispersion ``kappa_j`` and topology hyper-parameter
``alpha_j`` across components within each attribute, while means ``mu_hj``
vary per component.  The E-step computes posterior component weights from
saddle-point log densities; the M-step uses closed-form updates for the
proportions, means and dispersions, and a bounded line search for each
``alpha_j``.  Conjugate priors (mean-location pseudo-counts and an
inverse-gamma prior on the dispersion) turn the ML updates into MAP updates
through the same code path; zero prior mass reproduces ML bit-for-bit.

Restricted modes: ``gaussian_only`` pins every attribute to the Gaussian
member of the real-line family (a diagonal shared-covariance GMM), and
``homogeneous`` ties dispersion and hyper-parameter across attributes
(Bregman soft clustering for a single family).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .edm import AttributeKind, Family, MorrisReal, Tweedie
from .errors import DegenerateComponentError, EmptyClusterError
from .numopt import minimize_scalar_bounded

_MASS_EPS = 1e-12
_KAPPA_FLOOR = 1e-12
_MU_EPS = 1e-9


@dataclass
class MixtureParams:
    """Full parameter vector of a heterogeneous mixture."""

    pi: np.ndarray  # (K,) mixture proportions on the simplex
    mu: np.ndarray  # (K, J) component means, each in the attribute mean domain
    kappa: np.ndarray  # (J,) dispersions, > 0
    alpha: np.ndarray  # (J,) hyper-parameters, each in its working domain
    families: list[Family]

    @property
    def n_components(self) -> int:
        return len(self.pi)

    @property
    def n_attrs(self) -> int:
        return len(self.kappa)

    def copy(self) -> "MixtureParams":
        return MixtureParams(
            self.pi.copy(),
            self.mu.copy(),
            self.kappa.copy(),
            self.alpha.copy(),
            list(self.families),
        )

    def validate(self) -> None:
        if abs(self.pi.sum() - 1.0) > 1e-12 or np.any(self.pi < 0):
            raise ValueError("pi must lie on the simplex")
        if np.any(self.kappa <= 0):
            raise ValueError("kappa must be positive")
        for j, fam in enumerate(self.families):
            fam.check_alpha(self.alpha[j])
            fam.check_mean(self.mu[:, j])


@dataclass
class Priors:
    """Conjugate-prior hyper-parameters; all-zero mass reduces MAP to ML."""

    a_mu: np.ndarray  # (K, J) prior mean locations
    b_mu: np.ndarray  # (K, J) prior pseudo-counts, >= 0
    a_kappa: np.ndarray  # (J,) inverse-gamma shape, >= 0
    b_kappa: np.ndarray  # (J,) inverse-gamma scale, >= 0

    @classmethod
    def none(cls, n_components: int, n_attrs: int) -> "Priors":
        return cls(
            a_mu=np.ones((n_components, n_attrs)),
            b_mu=np.zeros((n_components, n_attrs)),
            a_kappa=np.zeros(n_attrs),
            b_kappa=np.zeros(n_attrs),
        )

    @classmethod
    def protocol_defaults(cls, centroids: np.ndarray) -> "Priors":
        """Evaluation-protocol priors: centroid locations with unit pseudo-count,
        inverse-gamma(1, 1e-9) on each dispersion."""
        k, j = centroids.shape
        return cls(
            a_mu=centroids.copy(),
            b_mu=np.ones((k, j)),
            a_kappa=np.ones(j),
            b_kappa=np.full(j, 1e-9),
        )


@dataclass
class FitConfig:
    mode: str = "ml"  # "ml" or "map"
    homogeneous: bool = False
    gaussian_only: bool = False
    max_iter: int = 1000
    tol: float = 1e-8

    def __post_init__(self):
        if self.mode not in ("ml", "map"):
            raise ValueError(f"mode must be 'ml' or 'map', got {self.mode!r}")


@dataclass
class FitResult:
    params: MixtureParams
    resp: np.ndarray  # (N, K) responsibilities
    trace: np.ndarray  # quasi-log-likelihood after each iteration (index 0 = init)
    assignments: np.ndarray  # (N,) argmax responsibilities
    n_iter: int
    converged: bool

    @property
    def loglik(self) -> float:
        return float(self.trace[-1])


def component_log_density(x, mu_h, params: MixtureParams) -> float:
    """Log joint density of one sample under one component (without the
    mixture proportion): the sum of per-attribute saddle-point log densities."""
    x = np.asarray(x, dtype=float)
    mu_h = np.asarray(mu_h, dtype=float)
    total = 0.0
    for j, fam in enumerate(params.families):
        total += fam.log_density(x[j], mu_h[j], params.kappa[j], params.alpha[j])
    return float(total)


def _log_weights(X: np.ndarray, params: MixtureParams) -> np.ndarray:
    """(N, K) matrix of per-sample per-component log densities."""
    n = X.shape[0]
    k = params.n_components
    out = np.zeros((n, k))
    for j, fam in enumerate(params.families):
        out += fam.log_density(
            X[:, j : j + 1], params.mu[:, j], params.kappa[j], params.alpha[j]
        )
    return out


def e_step(X: np.ndarray, params: MixtureParams):
    """Posterior component weights and the quasi-log-likelihood.

    Weights are computed with log-sum-exp; rows sum to one.
    """
    if np.any(params.pi < 1e-300):
        raise DegenerateComponentError(
            f"mixture proportion collapsed: min pi = {params.pi.min()}"
        )
    logw = _log_weights(X, params) + np.log(params.pi)[None, :]
    m = logw.max(axis=1, keepdims=True)
    lse = m + np.log(np.exp(logw - m).sum(axis=1, keepdims=True))
    resp = np.exp(logw - lse)
    return resp, float(lse.sum())


def m_step_pi(resp: np.ndarray) -> np.ndarray:
    return resp.mean(axis=0)


def m_step_mu(
    X: np.ndarray, resp: np.ndarray, params: MixtureParams, priors: Priors
) -> np.ndarray:
    """Responsibility-weighted means, shrunk toward the prior locations when
    prior pseudo-counts are present; projected into the mean-domain interior."""
    mass = resp.sum(axis=0)  # (K,)
    s1 = resp.T @ X  # (K, J)
    bk = priors.b_mu * params.kappa[None, :]
    den = bk + mass[:, None]
    if np.any(den < _MASS_EPS):
        bad = int(np.argmin(den.min(axis=1)))
        raise EmptyClusterError(
            f"component {bad} has no responsibility mass and no prior mass"
        )
    mu = (priors.a_mu * bk + s1) / den
    for j, fam in enumerate(params.families):
        if fam.positive_mean:
            mu[:, j] = np.maximum(mu[:, j], _MU_EPS)
    return mu


def _weighted_divergence(X, resp, mu, params) -> np.ndarray:
    """(J,) responsibility-weighted total divergence per attribute."""
    out = np.empty(params.n_attrs)
    for j, fam in enumerate(params.families):
        d = fam.divergence(X[:, j : j + 1], mu[:, j], params.alpha[j])
        out[j] = float((resp * d).sum())
    return out


def m_step_kappa(
    X: np.ndarray,
    resp: np.ndarray,
    mu: np.ndarray,
    params: MixtureParams,
    priors: Priors,
    *,
    homogeneous: bool = False,
) -> np.ndarray:
    """Closed-form dispersion update; with zero prior mass this is the ML
    update kappa_j = 2 * sum(r * d) / sum(r)."""
    dtot = _weighted_divergence(X, resp, mu, params)
    mass = resp.sum()
    if homogeneous:
        num = priors.b_kappa.sum() + dtot.sum()
        den = priors.a_kappa.sum() + 0.5 * mass * params.n_attrs
        return np.full(params.n_attrs, max(num / den, _KAPPA_FLOOR))
    kappa = (priors.b_kappa + dtot) / (priors.a_kappa + 0.5 * mass)
    return np.maximum(kappa, _KAPPA_FLOOR)


class _AttrObjective:
    """Expected complete-data negative quasi-log-likelihood of one attribute,
    as a function of (kappa, alpha), with responsibilities and means frozen.

    Evaluation is O(N + K) through the generator-function decomposition of
    the weighted divergence; the gradient in alpha is assembled from the same
    ingredients as divergence_dalpha / variance_dalpha.
    """

    def __init__(self, xcol, resp, mu_col, fam: Family):
        self.fam = fam
        self.mu = mu_col  # (K,)
        self.mass = resp.sum(axis=0)  # (K,)
        self.s1 = resp.T @ xcol  # (K,)
        self.n = float(resp.shape[0])
        if isinstance(fam, Tweedie) and fam.support is AttributeKind.NON_NEGATIVE_CONTINUOUS:
            zero = xcol == 0.0
            self.x = xcol[~zero]
            self.s1 = resp[~zero].T @ self.x
            self.mass_pos = resp[~zero].sum(axis=0)
            self.mass_zero = resp[zero].sum(axis=0)  # (K,)
            self.n_pos = float(self.x.size)
        else:
            self.x = xcol
            self.mass_pos = self.mass
            self.mass_zero = None
            self.n_pos = self.n

    def _weighted_div(self, kappa, alpha):
        """sum_ih r_ih d(x_i, mu_h | alpha) in the form the density uses
        (arguments scaled by kappa for the discrete saddle-point form)."""
        fam, mu = self.fam, self.mu
        if fam.discrete:
            gx = fam._gen(kappa * self.x, alpha).sum()
            gm = fam._gen(kappa * mu, alpha)
            gpm = fam._gen_prime(kappa * mu, alpha)
            resid = kappa * (self.s1 - self.mass * mu)
            return gx - (self.mass * gm).sum() - (gpm * resid).sum()
        gx = fam._gen(self.x, alpha).sum()
        gm = fam._gen(mu, alpha)
        gpm = fam._gen_prime(mu, alpha)
        resid = self.s1 - self.mass_pos * mu
        return gx - (self.mass_pos * gm).sum() - (gpm * resid).sum()

    def value(self, kappa, alpha):
        """Negative expected complete-data quasi-log-likelihood (additive
        constants in (kappa, alpha) are kept so values are comparable)."""
        fam = self.fam
        if fam.discrete:
            t = kappa * self.x + kappa * fam.saddle_c
            logvar = np.log(fam._var(t, alpha)).sum()
            out = (
                0.5 * (logvar - self.n * np.log(kappa))
                + self._weighted_div(kappa, alpha) / kappa
            )
        else:
            logvar = np.log(fam._var(self.x, alpha)).sum()
            out = (
                0.5 * (logvar + self.n_pos * np.log(kappa))
                + self._weighted_div(kappa, alpha) / kappa
            )
            if self.mass_zero is not None:
                # point mass at zero: modified saddle-point form
                n0 = self.mass_zero.sum()
                var0 = fam._var(np.asarray(kappa * fam.saddle_c), alpha)
                d0 = np.power(kappa * self.mu, alpha) / alpha
                out += 0.5 * n0 * (float(np.log(var0)) - np.log(kappa))
                out += (self.mass_zero * d0).sum() / kappa
        return float(out)

    def grad_alpha(self, kappa, alpha):
        fam = self.fam
        if fam.discrete:
            t = kappa * self.x + kappa * fam.saddle_c
            dlogvar = (fam._var_da(t, alpha) / fam._var(t, alpha)).sum()
            gx = fam._gen_da(kappa * self.x, alpha).sum()
            gm = fam._gen_da(kappa * self.mu, alpha)
            gpm = fam._gen_prime_da(kappa * self.mu, alpha)
            resid = kappa * (self.s1 - self.mass * self.mu)
            ddiv = gx - (self.mass * gm).sum() - (gpm * resid).sum()
            return float(0.5 * dlogvar + ddiv / kappa)
        dlogvar = (fam._var_da(self.x, alpha) / fam._var(self.x, alpha)).sum()
        gx = fam._gen_da(self.x, alpha).sum()
        gm = fam._gen_da(self.mu, alpha)
        gpm = fam._gen_prime_da(self.mu, alpha)
        resid = self.s1 - self.mass_pos * self.mu
        ddiv = gx - (self.mass_pos * gm).sum() - (gpm * resid).sum()
        out = 0.5 * dlogvar + ddiv / kappa
        if self.mass_zero is not None:
            km = kappa * self.mu
            d0_da = np.power(km, alpha) * (np.log(km) * alpha - 1.0) / alpha**2
            t0 = kappa * fam.saddle_c
            out += 0.5 * self.mass_zero.sum() * float(
                fam._var_da(np.asarray(t0), alpha) / fam._var(np.asarray(t0), alpha)
            )
            out += (self.mass_zero * d0_da).sum() / kappa
        return float(out)


def _attr_objectives(X, resp, mu, params) -> list[_AttrObjective]:
    return [
        _AttrObjective(X[:, j], resp, mu[:, j], fam)
        for j, fam in enumerate(params.families)
    ]


def m_step_alpha(
    X: np.ndarray,
    resp: np.ndarray,
    mu: np.ndarray,
    kappa: np.ndarray,
    params: MixtureParams,
    *,
    homogeneous: bool = False,
) -> np.ndarray:
    """Bounded line search for each alpha_j on the expected complete-data
    negative quasi-log-likelihood; a step that fails to improve on the current
    alpha_j is rejected (the line search returns the start in that case)."""
    objs = _attr_objectives(X, resp, mu, params)
    alpha = params.alpha.copy()
    if homogeneous:
        dom = params.families[0].alpha_domain

        def f(a):
            return sum(o.value(kappa[j], a) for j, o in enumerate(objs))

        def df(a):
            return sum(o.grad_alpha(kappa[j], a) for j, o in enumerate(objs))

        a_new, _ = minimize_scalar_bounded(f, df, dom, alpha[0])
        return np.full_like(alpha, a_new)
    for j, (fam, obj) in enumerate(zip(params.families, objs)):
        a_new, _ = minimize_scalar_bounded(
            lambda a: obj.value(kappa[j], a),
            lambda a: obj.grad_alpha(kappa[j], a),
            fam.alpha_domain,
            alpha[j],
        )
        alpha[j] = a_new
    return alpha


def kmeans_pp_centroid_rows(X: np.ndarray, k: int, rng: np.random.Generator):
    # local import: hard-clustering module owns the shared k-means machinery
    from .hard import kmeans_pp_init

    return X[kmeans_pp_init(X, k, rng)]


def _mean_floor(X: np.ndarray, families: list[Family]) -> np.ndarray:
    """Per-attribute floor used to keep initial centroids in the mean-domain
    interior (boundary seeds make every divergence degenerate)."""
    floors = np.zeros(X.shape[1])
    for j, fam in enumerate(families):
        if fam.positive_mean:
            pos = X[:, j][X[:, j] > 0]
            floors[j] = max(1e-3 * pos.mean(), _MU_EPS) if pos.size else 1e-3
    return floors


def initialize(
    X: np.ndarray,
    families: list[Family],
    k: int,
    rng: np.random.Generator,
    config: FitConfig,
    priors: Priors | None = None,
) -> tuple[MixtureParams, Priors]:
    """k-means++ initialization: seed rows become the component means (and the
    prior locations in MAP mode); dispersions come from the closed-form update
    on the induced nearest-seed hard partition."""
    n, n_attrs = X.shape
    centroids = kmeans_pp_centroid_rows(X, k, rng).astype(float)
    floors = _mean_floor(X, families)
    for j, fam in enumerate(families):
        if fam.positive_mean:
            centroids[:, j] = np.maximum(centroids[:, j], floors[j])

    alpha0 = np.array([fam.default_alpha for fam in families])
    params = MixtureParams(
        pi=np.full(k, 1.0 / k),
        mu=centroids,
        kappa=np.ones(n_attrs),
        alpha=alpha0,
        families=list(families),
    )
    if priors is None:
        priors = (
            Priors.protocol_defaults(centroids)
            if config.mode == "map"
            else Priors.none(k, n_attrs)
        )

    # hard one-hot responsibilities from nearest seed (squared Euclidean)
    d2 = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    resp0 = np.zeros((n, k))
    resp0[np.arange(n), d2.argmin(axis=1)] = 1.0
    params.kappa = m_step_kappa(
        X, resp0, centroids, params, priors, homogeneous=config.homogeneous
    )
    return params, priors


def _gaussian_families(n_attrs: int) -> list[Family]:
    return [MorrisReal() for _ in range(n_attrs)]


def fit(
    X: np.ndarray,
    families: list[Family],
    k: int,
    config: FitConfig | None = None,
    *,
    rng: np.random.Generator | None = None,
    seed: int | None = None,
    init: MixtureParams | None = None,
    priors: Priors | None = None,
) -> FitResult:
    """Run EM to convergence.

    Stops when the relative quasi-log-likelihood change drops below
    ``config.tol``, when the hard assignments are unchanged for two
    consecutive iterations, or at ``config.max_iter``.
    """
    config = config or FitConfig()
    X = np.asarray(X, dtype=float)
    n, n_attrs = X.shape
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < k:
        raise ValueError(f"need at least k={k} samples, got {n}")
    if config.gaussian_only:
        families = _gaussian_families(n_attrs)
    if len(families) != n_attrs:
        raise ValueError("one family per attribute required")
    if config.homogeneous:
        names = {fam.name for fam in families}
        if len(names) != 1:
            raise ValueError(
                f"homogeneous mode requires a single family, got {sorted(names)}"
            )
    for j, fam in enumerate(families):
        fam.check_support(X[:, j])

    if rng is None:
        rng = np.random.default_rng(seed)
    if config.mode == "ml":
        # ML runs through the same formulas with zero prior mass
        priors = Priors.none(k, n_attrs)
    if init is None:
        params, priors = initialize(X, families, k, rng, config, priors)
    else:
        params = init.copy()
        if priors is None:
            priors = (
                Priors.protocol_defaults(params.mu)
                if config.mode == "map"
                else Priors.none(k, n_attrs)
            )

    resp, loglik = e_step(X, params)
    trace = [loglik]
    prev_assign = resp.argmax(axis=1)
    stable = 0
    converged = False
    n_reseeds = 0
    it = 0

    for it in range(1, config.max_iter + 1):
        # revive components whose mean update would be undefined
        mass = resp.sum(axis=0)
        den = priors.b_mu * params.kappa[None, :] + mass[:, None]
        dead = np.where(den.min(axis=1) < _MASS_EPS)[0]
        if dead.size:
            n_reseeds += 1
            if n_reseeds > 3:
                raise EmptyClusterError(
                    f"components kept collapsing after {n_reseeds - 1} re-seeds"
                )
            logw = _log_weights(X, params) + np.log(params.pi)[None, :]
            m = logw.max(axis=1, keepdims=True)
            lse = (m + np.log(np.exp(logw - m).sum(axis=1, keepdims=True))).ravel()
            order = np.argsort(lse)  # worst-fit points first
            floors = _mean_floor(X, params.families)
            for rank, h in enumerate(dead):
                point = X[order[rank]].copy()
                for j, fam in enumerate(params.families):
                    if fam.positive_mean:
                        point[j] = max(point[j], floors[j])
                params.mu[h] = point
                params.pi[h] = 1.0 / n
            params.pi = params.pi / params.pi.sum()
            resp, loglik = e_step(X, params)

        params.pi = m_step_pi(resp)
        params.mu = m_step_mu(X, resp, params, priors)
        kappa_new = m_step_kappa(
            X, resp, params.mu, params, priors, homogeneous=config.homogeneous
        )
        if config.gaussian_only:
            params.kappa = kappa_new
        else:
            alpha_new = m_step_alpha(
                X,
                resp,
                params.mu,
                kappa_new,
                params,
                homogeneous=config.homogeneous,
            )
            # Accept the (kappa_j, alpha_j) pair only if it does not decrease
            # the expected complete-data quasi-log-likelihood.  The closed-form
            # kappa update is exact for the continuous saddle-point form, but
            # not for attributes using the discrete form.
            needs_guard = [
                j
                for j, fam in enumerate(params.families)
                if fam.discrete
                or (fam.positive_mean and not fam.discrete and np.any(X[:, j] == 0.0))
            ]
            if needs_guard and not config.homogeneous:
                objs = {
                    j: _AttrObjective(X[:, j], resp, params.mu[:, j], params.families[j])
                    for j in needs_guard
                }
                for j in needs_guard:
                    new_v = objs[j].value(kappa_new[j], alpha_new[j])
                    old_v = objs[j].value(params.kappa[j], params.alpha[j])
                    if new_v > old_v + 1e-12 * abs(old_v):
                        kappa_new[j] = params.kappa[j]
                        alpha_new[j] = params.alpha[j]
            params.kappa = kappa_new
            params.alpha = alpha_new

        resp, loglik = e_step(X, params)
        trace.append(loglik)
        assign = resp.argmax(axis=1)
        stable = stable + 1 if np.array_equal(assign, prev_assign) else 0
        prev_assign = assign
        if stable >= 2:
            converged = True
            break
        rel = abs(trace[-1] - trace[-2]) / max(abs(trace[-2]), 1e-300)
        if rel < config.tol:
            converged = True
            break

    return FitResult(
        params=params,
        resp=resp,
        trace=np.asarray(trace),
        assignments=prev_assign,
        n_iter=it,
        converged=converged,
    )
