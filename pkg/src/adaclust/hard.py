"""Hard clustering: a moment-based adaptive algorithm plus k-means.

The adaptive algorithm alternates three steps: fit the shared parameter
vector (means, dispersions, hyper-parameters) by minimizing a
continuously-updating method-of-moments objective over the feasible box;
freeze the per-cluster, per-attribute 2x2 weight matrices (inverses of the
moment-residual second-moment blocks); and re-assign each sample to the
cluster with the smallest quadratic moment distance.  Because clusters are
disjoint, the weight matrix is block diagonal and is inverted block by block
in O(K J).

Moment conditions per cluster/attribute pair: the centered pair
``[x - mu, (x - mu)^2 - kappa * v(mu | alpha)]`` by default (both components
are zero in expectation under the model); the literal raw-second-moment
variant ``[x - mu, x^2 - kappa * v(mu | alpha)]`` is available behind
``GmomConfig.literal_moments`` for comparison.

k-means (Lloyd iterations with k-means++ seeding) doubles as the
initialization routine and as a baseline.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .edm import Family
from .errors import InitError, SingularBlockError
from .numopt import Box, minimize_box
from .soft import MixtureParams, _mean_floor

_KAPPA_BOUNDS = (1e-9, 1e9)
_MU_BOUND = 1e9
_RIDGE_SCALE = 1e-8


# ---------------------------------------------------------------------------
# k-means++ and k-means
# ---------------------------------------------------------------------------


def kmeans_pp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """D^2-weighted seeding; returns k row indices of distinct points."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if np.unique(X, axis=0).shape[0] < k:
        raise InitError(f"need {k} distinct points, data has fewer")
    idx = np.empty(k, dtype=int)
    idx[0] = rng.integers(n)
    d2 = ((X - X[idx[0]]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            raise InitError("k-means++ ran out of distinct candidate points")
        idx[i] = rng.choice(n, p=d2 / total)
        d2 = np.minimum(d2, ((X - X[idx[i]]) ** 2).sum(axis=1))
    return idx


@dataclass
class KmeansResult:
    assign: np.ndarray
    centroids: np.ndarray
    inertia: float
    n_iter: int
    converged: bool


def _nearest(X: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d2 = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return d2.argmin(axis=1)


def fit_kmeans(
    X: np.ndarray, k: int, rng: np.random.Generator, *, max_iter: int = 300
) -> KmeansResult:
    """Lloyd iterations on squared Euclidean distance from k-means++ seeds."""
    X = np.asarray(X, dtype=float)
    centroids = X[kmeans_pp_init(X, k, rng)].copy()
    assign = _nearest(X, centroids)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        for h in range(k):
            members = assign == h
            if members.any():
                centroids[h] = X[members].mean(axis=0)
            else:
                # re-seed at the point farthest from its assigned centroid
                far = int(np.argmax(((X - centroids[assign]) ** 2).sum(axis=1)))
                centroids[h] = X[far]
                assign[far] = h
        new_assign = _nearest(X, centroids)
        if np.array_equal(new_assign, assign):
            converged = True
            break
        assign = new_assign
    inertia = float(((X - centroids[assign]) ** 2).sum())
    return KmeansResult(assign, centroids, inertia, it, converged)


# ---------------------------------------------------------------------------
# Moment machinery
# ---------------------------------------------------------------------------


@dataclass
class GmomConfig:
    max_iter: int = 50
    literal_moments: bool = False
    light: bool = False
    pseudo_count: int = 0  # pseudo samples per cluster at pseudo_locations
    pseudo_locations: np.ndarray | None = field(default=None, repr=False)


def moment_vector(x, h: int, j: int, params: MixtureParams, *, literal: bool = False):
    """Moment-condition residual pair for one sample, cluster and attribute."""
    x = np.asarray(x, dtype=float)
    fam = params.families[j]
    mu = params.mu[h, j]
    v = params.kappa[j] * fam.variance(mu, params.alpha[j])
    m1 = x[j] - mu
    m2 = (x[j] ** 2 - v) if literal else (m1**2 - v)
    return np.array([m1, m2])


def weight_matrix(
    cluster_points: np.ndarray,
    h: int,
    j: int,
    params: MixtureParams,
    *,
    literal: bool = False,
) -> np.ndarray:
    """Inverse of the ridge-stabilized residual second-moment block."""
    pts = np.asarray(cluster_points, dtype=float)
    if pts.shape[0] == 0:
        raise ValueError("cluster must be non-empty")
    fam = params.families[j]
    mu = params.mu[h, j]
    v = params.kappa[j] * fam.variance(mu, params.alpha[j])
    m1 = pts[:, j] - mu
    m2 = (pts[:, j] ** 2 - v) if literal else (m1**2 - v)
    m11 = float((m1 * m1).mean())
    m12 = float((m1 * m2).mean())
    m22 = float((m2 * m2).mean())
    trace = m11 + m22
    if trace == 0.0:
        raise SingularBlockError(
            f"attribute {j} is constant in cluster {h}: zero moment residuals"
        )
    ridge = _RIDGE_SCALE * trace / 2.0
    a11, a22 = m11 + ridge, m22 + ridge
    det = a11 * a22 - m12 * m12
    return np.array([[a22, -m12], [-m12, a11]]) / det


class _PartitionStats:
    """Per-(cluster, attribute) centered power sums of the (optionally
    pseudo-sample augmented) data; everything the moment objective needs,
    so objective evaluations are O(K) scalar arithmetic per attribute."""

    def __init__(self, X, assign, k, config: GmomConfig):
        n, n_attrs = X.shape
        b = config.pseudo_count
        self.k = k
        self.center = np.empty((k, n_attrs))
        self.c2 = np.empty((k, n_attrs))
        self.c3 = np.empty((k, n_attrs))
        self.c4 = np.empty((k, n_attrs))
        self.count = np.empty(k)
        for h in range(k):
            rows = X[assign == h]
            if b > 0:
                pseudo = np.repeat(config.pseudo_locations[h][None, :], b, axis=0)
                rows = np.vstack([rows, pseudo])
            if rows.shape[0] == 0:
                raise ValueError(f"cluster {h} is empty")
            u = rows - rows.mean(axis=0)
            self.center[h] = rows.mean(axis=0)
            self.c2[h] = (u**2).mean(axis=0)
            self.c3[h] = (u**3).mean(axis=0)
            self.c4[h] = (u**4).mean(axis=0)
            self.count[h] = rows.shape[0]

    def block_moments(self, j, mu_col, v_col, *, literal: bool):
        """Residual means and second moments for one attribute, all clusters.

        Returns (m1bar, m2bar, M11, M12, M22) as length-K arrays.  Derived by
        expanding the residual polynomials around the cluster centers, with
        c1 = 0 by construction.
        """
        t = self.center[:, j]
        c2, c3, c4 = self.c2[:, j], self.c3[:, j], self.c4[:, j]
        delta = mu_col - t
        m1bar = -delta
        m11 = c2 + delta**2
        if literal:
            w = t**2 - v_col
            m2bar = c2 + w
            m22 = c4 + 4 * t * c3 + (4 * t**2 + 2 * w) * c2 + w**2
            m12 = c3 + 2 * t * c2 - delta * (c2 + w)
        else:
            w = delta**2 - v_col
            m2bar = c2 + w
            m22 = c4 - 4 * delta * c3 + (4 * delta**2 + 2 * w) * c2 + w**2
            m12 = c3 - 3 * delta * c2 - delta * w
        return m1bar, m2bar, m11, m12, m22


def _quad_forms(m1bar, m2bar, m11, m12, m22):
    """Per-cluster quadratic forms mbar^T W mbar with W the ridge-stabilized
    block inverse; vectorized over clusters."""
    trace = m11 + m22
    ridge = _RIDGE_SCALE * trace / 2.0
    a11, a22 = m11 + ridge, m22 + ridge
    det = a11 * a22 - m12**2
    return (a22 * m1bar**2 - 2 * m12 * m1bar * m2bar + a11 * m2bar**2) / det


def _objective_j(stats: _PartitionStats, fam: Family, j, mu_col, kappa, alpha, config):
    v_col = kappa * fam._var(mu_col, alpha)
    m1bar, m2bar, m11, m12, m22 = stats.block_moments(
        j, mu_col, v_col, literal=config.literal_moments
    )
    if config.light:
        ridge = _RIDGE_SCALE * m22
        return float((m2bar**2 / (m22 + ridge)).sum())
    return float(_quad_forms(m1bar, m2bar, m11, m12, m22).sum())


def cugmom_objective(
    X: np.ndarray, assign: np.ndarray, params: MixtureParams, config: GmomConfig | None = None
) -> float:
    """Continuously-updating moment objective: the weight matrices are
    recomputed from the residuals at the supplied parameters."""
    config = config or GmomConfig()
    stats = _PartitionStats(X, assign, params.n_components, config)
    total = 0.0
    for j, fam in enumerate(params.families):
        total += _objective_j(
            stats, fam, j, params.mu[:, j], params.kappa[j], params.alpha[j], config
        )
    return total


def _mu_bounds(fam: Family) -> tuple[float, float]:
    return (1e-9, _MU_BOUND) if fam.positive_mean else (-_MU_BOUND, _MU_BOUND)


def optimize_lambda(
    X: np.ndarray,
    assign: np.ndarray,
    params0: MixtureParams,
    config: GmomConfig | None = None,
) -> MixtureParams:
    """Minimize the moment objective over the feasible box, one attribute at
    a time (the objective is separable across attributes given the partition).
    The result never has a higher objective than ``params0``."""
    config = config or GmomConfig()
    k = params0.n_components
    params = params0.copy()
    stats = _PartitionStats(X, assign, k, config)

    for j, fam in enumerate(params.families):
        lo_a, hi_a = fam.alpha_domain
        mu_lo, mu_hi = _mu_bounds(fam)

        if config.light:
            # means pinned at the (augmented) cluster ML estimates
            mu_col = stats.center[:, j].copy()
            if fam.positive_mean:
                mu_col = np.maximum(mu_col, 1e-9)
            params.mu[:, j] = mu_col

            def f(z, _mu=mu_col):
                return _objective_j(stats, fam, j, _mu, z[0], z[1], config)

            box = Box(np.array([_KAPPA_BOUNDS[0], lo_a]), np.array([_KAPPA_BOUNDS[1], hi_a]))
            z0 = np.array([params.kappa[j], params.alpha[j]])
            z0 = box.clip(z0)
            start = _probe_start(f, z0, mu_col, stats, fam, j, config)
            z, _ = minimize_box(f, None, box, start)
            params.kappa[j], params.alpha[j] = z
            continue

        def f(z):
            return _objective_j(stats, fam, j, z[:k], z[k], z[k + 1], config)

        box = Box(
            np.concatenate([np.full(k, mu_lo), [_KAPPA_BOUNDS[0], lo_a]]),
            np.concatenate([np.full(k, mu_hi), [_KAPPA_BOUNDS[1], hi_a]]),
        )
        z0 = box.clip(np.concatenate([params.mu[:, j], [params.kappa[j], params.alpha[j]]]))
        start = _probe_start_full(f, z0, stats, fam, j, config)
        z, _ = minimize_box(f, None, box, start)
        params.mu[:, j] = z[:k]
        params.kappa[j] = z[k]
        params.alpha[j] = z[k + 1]
    return params


def _alpha_probe_grid(fam: Family, n: int = 17) -> np.ndarray:
    lo, hi = fam.alpha_domain
    if hi - lo > 50:
        # wide working domains: concentrate probes near the low end where the
        # named members live, keep a few far out
        near = np.linspace(lo, lo + 5.0, n - 4)
        far = np.linspace(lo + 10.0, hi, 4)
        return np.concatenate([near, far])
    return np.linspace(lo, hi, n)


def _kappa_for_alpha(stats, fam, j, mu_col, alpha):
    v_unit = np.maximum(fam._var(np.maximum(mu_col, 1e-12) if fam.positive_mean else mu_col, alpha), 1e-300)
    ratio = stats.c2[:, j] / v_unit
    k = float(np.median(ratio))
    return float(np.clip(k, *_KAPPA_BOUNDS))


def _probe_start(f, z0, mu_col, stats, fam, j, config):
    """Light mode: probe (alpha grid, matched kappa) pairs for a better start."""
    best, fbest = z0, f(z0)
    for a in _alpha_probe_grid(fam):
        z = np.array([_kappa_for_alpha(stats, fam, j, mu_col, a), a])
        fz = f(z)
        if np.isfinite(fz) and fz < fbest:
            best, fbest = z, fz
    return best


def _probe_start_full(f, z0, stats, fam, j, config):
    k = stats.k
    mu_col = z0[:k]
    best, fbest = z0, f(z0)
    for a in _alpha_probe_grid(fam):
        z = np.concatenate([mu_col, [_kappa_for_alpha(stats, fam, j, mu_col, a), a]])
        fz = f(z)
        if np.isfinite(fz) and fz < fbest:
            best, fbest = z, fz
    return best


def block_weights(
    X: np.ndarray, assign: np.ndarray, params: MixtureParams, config: GmomConfig | None = None
) -> np.ndarray:
    """(K, J, 2, 2) frozen weight matrices for the assignment step (in light
    mode the first-moment row/column is zeroed, leaving the scalar weight)."""
    config = config or GmomConfig()
    k = params.n_components
    n_attrs = params.n_attrs
    stats = _PartitionStats(X, assign, k, config)
    out = np.zeros((k, n_attrs, 2, 2))
    for j, fam in enumerate(params.families):
        v_col = params.kappa[j] * fam._var(params.mu[:, j], params.alpha[j])
        m1bar, m2bar, m11, m12, m22 = stats.block_moments(
            j, params.mu[:, j], v_col, literal=config.literal_moments
        )
        if config.light:
            out[:, j, 1, 1] = 1.0 / (m22 + _RIDGE_SCALE * m22)
            continue
        trace = m11 + m22
        if np.any(trace == 0.0):
            bad = int(np.argmax(trace == 0.0))
            raise SingularBlockError(
                f"attribute {j} is constant in cluster {bad}: zero moment residuals"
            )
        ridge = _RIDGE_SCALE * trace / 2.0
        a11, a22 = m11 + ridge, m22 + ridge
        det = a11 * a22 - m12**2
        out[:, j, 0, 0] = a22 / det
        out[:, j, 0, 1] = out[:, j, 1, 0] = -m12 / det
        out[:, j, 1, 1] = a11 / det
    return out


def assign_step(
    X: np.ndarray, params: MixtureParams, weights: np.ndarray, config: GmomConfig | None = None
) -> np.ndarray:
    """Assign each sample to the cluster with the smallest quadratic moment
    distance; ties break to the lowest cluster index."""
    config = config or GmomConfig()
    v = params.kappa[None, :] * np.stack(
        [fam._var(params.mu[:, j], params.alpha[j]) for j, fam in enumerate(params.families)],
        axis=1,
    )  # (K, J)
    m1 = X[:, None, :] - params.mu[None, :, :]  # (N, K, J)
    if config.literal_moments:
        m2 = X[:, None, :] ** 2 - v[None, :, :]
    else:
        m2 = m1**2 - v[None, :, :]
    quad = (
        weights[None, :, :, 0, 0] * m1**2
        + 2.0 * weights[None, :, :, 0, 1] * m1 * m2
        + weights[None, :, :, 1, 1] * m2**2
    ).sum(axis=2)
    return quad.argmin(axis=1)


@dataclass
class GmomResult:
    assign: np.ndarray
    params: MixtureParams
    trace: np.ndarray  # objective after each lambda refit
    n_iter: int
    converged: bool

    @property
    def objective(self) -> float:
        return float(self.trace[-1])


def _initial_params(X, families, k, assign, config) -> MixtureParams:
    """Cluster sample means/variances and the midpoint hyper-parameter."""
    n_attrs = X.shape[1]
    stats = _PartitionStats(X, assign, k, config)
    mu = stats.center.copy()
    floors = _mean_floor(X, families)
    alpha = np.empty(n_attrs)
    kappa = np.empty(n_attrs)
    for j, fam in enumerate(families):
        if fam.positive_mean:
            mu[:, j] = np.maximum(mu[:, j], floors[j])
        lo, hi = fam.alpha_domain
        alpha[j] = 0.5 * (lo + hi)
        kappa[j] = _kappa_for_alpha(stats, fam, j, mu[:, j], alpha[j])
    counts = np.bincount(assign, minlength=k).astype(float)
    return MixtureParams(counts / counts.sum(), mu, kappa, alpha, list(families))


def fit_gmom(
    X: np.ndarray,
    families: list[Family],
    k: int,
    config: GmomConfig | None = None,
    *,
    rng: np.random.Generator | None = None,
    seed: int | None = None,
) -> GmomResult:
    """Alternate parameter refits, weight freezes and re-assignments until the
    partition is stable.  Each cluster needs at least two points for its
    second-moment residuals, hence N >= 2 K."""
    config = config or GmomConfig()
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if n < 2 * k:
        raise ValueError(f"need at least 2k={2 * k} samples, got {n}")
    for j, fam in enumerate(families):
        fam.check_support(X[:, j])
    if rng is None:
        rng = np.random.default_rng(seed)

    seeds = X[kmeans_pp_init(X, k, rng)]
    assign = _nearest(X, seeds)
    assign = _fix_empty(X, assign, k, None)
    if config.pseudo_count > 0 and config.pseudo_locations is None:
        locs = seeds.copy()
        floors = _mean_floor(X, families)
        for j, fam in enumerate(families):
            if fam.positive_mean:
                locs[:, j] = np.maximum(locs[:, j], floors[j])
        config = dataclasses.replace(config, pseudo_locations=locs)
    params = _initial_params(X, families, k, assign, config)

    trace = []
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        params = optimize_lambda(X, assign, params, config)
        trace.append(cugmom_objective(X, assign, params, config))
        weights = block_weights(X, assign, params, config)
        new_assign = assign_step(X, params, weights, config)
        new_assign = _fix_empty(X, new_assign, k, (params, weights, config))
        if np.array_equal(new_assign, assign):
            converged = True
            break
        assign = new_assign
    return GmomResult(assign, params, np.asarray(trace), it, converged)


def _fix_empty(X, assign, k, context) -> np.ndarray:
    """Re-seed empty clusters with the point of maximal quadratic distance to
    its assigned cluster (Euclidean at initialization time)."""
    assign = assign.copy()
    for h in range(k):
        if (assign == h).any():
            continue
        if context is None:
            centers = np.zeros((k, X.shape[1]))
            for g in range(k):
                members = assign == g
                if members.any():
                    centers[g] = X[members].mean(axis=0)
            d = ((X - centers[assign]) ** 2).sum(axis=1)
        else:
            params, weights, config = context
            mu_a = params.mu[assign]  # (N, J)
            v_a = np.stack(
                [
                    params.kappa[j] * params.families[j]._var(mu_a[:, j], params.alpha[j])
                    for j in range(params.n_attrs)
                ],
                axis=1,
            )
            m1 = X - mu_a
            m2 = (X**2 - v_a) if config.literal_moments else (m1**2 - v_a)
            w = weights[assign]  # (N, J, 2, 2)
            d = (
                w[:, :, 0, 0] * m1**2 + 2 * w[:, :, 0, 1] * m1 * m2 + w[:, :, 1, 1] * m2**2
            ).sum(axis=1)
        far = int(np.argmax(d))
        assign[far] = h
    return assign
