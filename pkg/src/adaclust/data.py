"""Dataset ingestion, attribute-type detection, transforms and generators.

Attribute kinds are detected from the values alone: integrality (to a 1e-9
tolerance) separates discrete from continuous; the sign of the minimum
separates positive / non-negative / real; continuous values strictly inside
(0, 1) are unit-interval data, which is mapped through the logit transform
onto the real line before modeling.

The synthetic generators mirror the evaluation protocol: mixture proportions
from a symmetric Dirichlet, per-attribute dispersions from an inverse-gamma,
member distributions drawn from {Gaussian, gamma, inverse-Gaussian, Poisson,
negative binomial}, and centroids rejection-sampled until every other
centroid has density below a separation threshold under each component.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .edm import AttributeKind, Family, family_for_kind, family_from_name
from .errors import DomainError, GeneratorTimeoutError, ParseError
from .soft import MixtureParams

_INT_TOL = 1e-9

MEMBERS = ("gaussian", "gamma", "inverse-gaussian", "poisson", "negative-binomial")

# member -> (family name, hyper-parameter, dispersion drawn from the prior?)
_MEMBER_FAMILY = {
    "gaussian": ("morris-real", 0.0, True),
    "gamma": ("tweedie-positive", 0.0, True),
    "inverse-gaussian": ("tweedie-positive", -1.0, True),
    "poisson": ("morris-count-nonnegative", 0.0, False),
    "negative-binomial": ("morris-count-nonnegative", 1.0, False),
}


@dataclass
class Dataset:
    values: np.ndarray  # (N, J)
    kinds: list[AttributeKind]
    labels: np.ndarray | None = None  # (N,) integer class ids
    names: list[str] | None = None

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_attrs(self) -> int:
        return self.values.shape[1]

    def validate(self) -> None:
        for j, kind in enumerate(self.kinds):
            col = self.values[:, j]
            if kind.is_discrete and np.any(np.abs(col - np.round(col)) > _INT_TOL):
                raise DomainError(f"column {j} declared discrete but has non-integers")
            if kind is AttributeKind.POSITIVE_DISCRETE and col.min() < 1:
                raise DomainError(f"column {j} declared positive discrete but has values < 1")
            if kind is AttributeKind.NON_NEGATIVE_DISCRETE and col.min() < 0:
                raise DomainError(f"column {j} declared non-negative but has negatives")
            if kind is AttributeKind.POSITIVE_CONTINUOUS and col.min() <= 0:
                raise DomainError(f"column {j} declared positive but has values <= 0")
            if kind is AttributeKind.NON_NEGATIVE_CONTINUOUS and col.min() < 0:
                raise DomainError(f"column {j} declared non-negative but has negatives")
            if kind is AttributeKind.UNIT_INTERVAL and (col.min() <= 0 or col.max() >= 1):
                raise DomainError(f"column {j} declared unit-interval but leaves (0, 1)")


def detect_kinds(values: np.ndarray) -> list[AttributeKind]:
    """Classify each column by integrality and sign; deterministic and
    idempotent."""
    values = np.asarray(values, dtype=float)
    kinds = []
    for j in range(values.shape[1]):
        col = values[:, j]
        discrete = bool(np.all(np.abs(col - np.round(col)) < _INT_TOL))
        lo, hi = col.min(), col.max()
        if discrete:
            if lo >= 1:
                kinds.append(AttributeKind.POSITIVE_DISCRETE)
            elif lo >= 0:
                kinds.append(AttributeKind.NON_NEGATIVE_DISCRETE)
            else:
                kinds.append(AttributeKind.REAL_CONTINUOUS)
        elif lo > 0 and hi < 1:
            kinds.append(AttributeKind.UNIT_INTERVAL)
        elif lo > 0:
            kinds.append(AttributeKind.POSITIVE_CONTINUOUS)
        elif lo >= 0:
            kinds.append(AttributeKind.NON_NEGATIVE_CONTINUOUS)
        else:
            kinds.append(AttributeKind.REAL_CONTINUOUS)
    return kinds


def logit_transform(values):
    """Elementwise log(x / (1 - x)); requires values strictly inside (0, 1)."""
    values = np.asarray(values, dtype=float)
    if np.any(values <= 0) or np.any(values >= 1):
        raise DomainError("logit transform requires values strictly inside (0, 1)")
    return np.log(values / (1.0 - values))


def logit_inverse(values):
    values = np.asarray(values, dtype=float)
    return 1.0 / (1.0 + np.exp(-values))


def to_model_matrix(dataset: Dataset) -> tuple[np.ndarray, list[Family], np.ndarray]:
    """Values ready for fitting: unit-interval columns are logit-transformed
    and modeled on the real line.  Returns (values, families, unit_col_mask)."""
    values = dataset.values.astype(float).copy()
    families = []
    unit = np.zeros(dataset.n_attrs, dtype=bool)
    for j, kind in enumerate(dataset.kinds):
        if kind is AttributeKind.UNIT_INTERVAL:
            values[:, j] = logit_transform(values[:, j])
            unit[j] = True
            families.append(family_for_kind(AttributeKind.REAL_CONTINUOUS))
        else:
            families.append(family_for_kind(kind))
    return values, families, unit


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def sample_member(member: str, mu: float, kappa: float, n: int, rng: np.random.Generator):
    """i.i.d. samples from a named member with mean mu and variance
    kappa * v(mu | alpha) for the member's family and hyper-parameter."""
    if member not in MEMBERS:
        raise DomainError(f"unknown member {member!r}; expected one of {MEMBERS}")
    if member in ("poisson", "negative-binomial"):
        if kappa != 1.0:
            raise DomainError(f"{member} requires unit dispersion, got kappa={kappa}")
        if mu <= 0:
            raise DomainError(f"{member} requires mu > 0")
        if member == "poisson":
            return rng.poisson(mu, n).astype(float)
        # gamma-Poisson mixture with unit shape: variance mu + mu^2
        return rng.poisson(rng.gamma(1.0, mu, n)).astype(float)
    if kappa <= 0:
        raise DomainError(f"kappa must be positive, got {kappa}")
    if member == "gaussian":
        return rng.normal(mu, np.sqrt(kappa), n)
    if mu <= 0:
        raise DomainError(f"{member} requires mu > 0")
    if member == "gamma":
        # shape 1/kappa, scale mu*kappa: mean mu, variance kappa mu^2
        return rng.gamma(1.0 / kappa, mu * kappa, n)
    # inverse-Gaussian: mean mu, shape 1/kappa, variance kappa mu^3
    return rng.wald(mu, 1.0 / kappa, n)


def member_family(member: str) -> tuple[Family, float]:
    name, alpha, _ = _MEMBER_FAMILY[member]
    return family_from_name(name), alpha


@dataclass
class GeneratorSpec:
    n: int = 1000
    n_attrs: int = 10
    k: int = 4
    dirichlet: float = 1.0
    dispersion_shape: float = 1.01
    dispersion_scale: float = 1.0
    density_threshold: float = 0.01
    seed: int = 0
    max_proposals: int = 100_000
    members: tuple[str, ...] = MEMBERS


def _draw_dispersion(spec: GeneratorSpec, rng) -> float:
    # inverse-gamma(shape, scale): reciprocal of gamma(shape, 1/scale)
    return float(spec.dispersion_scale / rng.gamma(spec.dispersion_shape, 1.0))


def _propose_centroid(fam: Family, rng) -> float:
    # high-dispersion gamma / inverse-Gaussian components need centroid
    # ratios far beyond 1e3 to fall under the density threshold both ways
    if fam.positive_mean:
        return float(np.exp(rng.uniform(np.log(0.1), np.log(1e4))))
    return float(rng.uniform(-50.0, 50.0))


_STALL_LIMIT = 2000


def _separated_centroids(fam, alpha, kappa, k, threshold, max_proposals, rng):
    """Rejection-sample k centroids so that each centroid has density below
    the threshold under every other component.  A stalled partial set (a
    centroid that nothing can separate from) is discarded and re-drawn."""
    log_thr = np.log(threshold)
    centroids: list[float] = []
    proposals = 0
    stall = 0
    while len(centroids) < k:
        proposals += 1
        if proposals > max_proposals:
            raise GeneratorTimeoutError(
                f"no {k}-centroid configuration found in {max_proposals} proposals"
            )
        cand = _propose_centroid(fam, rng)
        ok = True
        for c in centroids:
            if (
                fam.log_density(cand, c, kappa, alpha) >= log_thr
                or fam.log_density(c, cand, kappa, alpha) >= log_thr
            ):
                ok = False
                break
        if ok:
            centroids.append(cand)
            stall = 0
        else:
            stall += 1
            if stall >= _STALL_LIMIT:
                centroids.clear()
                stall = 0
    return np.array(centroids)


def generate_heterogeneous(spec: GeneratorSpec):
    """Heterogeneous mixture dataset with known ground truth.

    Returns (Dataset, MixtureParams, member names per attribute).
    """
    rng = np.random.default_rng(spec.seed)
    pi = rng.dirichlet(np.full(spec.k, spec.dirichlet))
    labels = rng.choice(spec.k, size=spec.n, p=pi)

    values = np.empty((spec.n, spec.n_attrs))
    kinds: list[AttributeKind] = []
    families: list[Family] = []
    members: list[str] = []
    mu = np.empty((spec.k, spec.n_attrs))
    kappa = np.empty(spec.n_attrs)
    alpha = np.empty(spec.n_attrs)

    for j in range(spec.n_attrs):
        member = str(rng.choice(list(spec.members)))
        fam, a = member_family(member)
        draws_dispersion = _MEMBER_FAMILY[member][2]
        kap = _draw_dispersion(spec, rng) if draws_dispersion else 1.0
        centroids = _separated_centroids(
            fam, a, kap, spec.k, spec.density_threshold, spec.max_proposals, rng
        )
        for h in range(spec.k):
            idx = labels == h
            values[idx, j] = sample_member(member, centroids[h], kap, int(idx.sum()), rng)
        members.append(member)
        families.append(fam)
        kinds.append(fam.support)
        mu[:, j] = centroids
        kappa[j] = kap
        alpha[j] = a

    params = MixtureParams(pi=pi, mu=mu, kappa=kappa, alpha=alpha, families=families)
    names = [f"x{j}" for j in range(spec.n_attrs)]
    dataset = Dataset(values=values, kinds=kinds, labels=labels, names=names)
    return dataset, params, members


def generate_homogeneous_1d(
    member: str,
    rng: np.random.Generator,
    *,
    k: int = 4,
    n: int = 1000,
    dirichlet: float = 1.0,
    dispersion_shape: float = 1.01,
    dispersion_scale: float = 1.0,
    density_threshold: float = 0.01,
    max_proposals: int = 100_000,
):
    """One-dimensional mixture from a single named member; returns
    (values, truth dict with pi/mu/kappa/alpha/labels/member)."""
    fam, a = member_family(member)
    spec = GeneratorSpec(
        dispersion_shape=dispersion_shape,
        dispersion_scale=dispersion_scale,
    )
    kap = _draw_dispersion(spec, rng) if _MEMBER_FAMILY[member][2] else 1.0
    centroids = _separated_centroids(fam, a, kap, k, density_threshold, max_proposals, rng)
    pi = rng.dirichlet(np.full(k, dirichlet))
    labels = rng.choice(k, size=n, p=pi)
    values = np.empty(n)
    for h in range(k):
        idx = labels == h
        values[idx] = sample_member(member, centroids[h], kap, int(idx.sum()), rng)
    truth = {
        "member": member,
        "pi": pi,
        "mu": centroids,
        "kappa": kap,
        "alpha": a,
        "labels": labels,
    }
    return values, truth


def qq_quantiles(a, b, q: int) -> np.ndarray:
    """q matched empirical quantile pairs (type-7 linear interpolation)."""
    if q < 2:
        raise ValueError("need at least 2 quantile points")
    levels = np.linspace(0.0, 1.0, q)
    qa = np.quantile(np.asarray(a, dtype=float), levels, method="linear")
    qb = np.quantile(np.asarray(b, dtype=float), levels, method="linear")
    return np.column_stack([qa, qb])


# ---------------------------------------------------------------------------
# CSV and model files
# ---------------------------------------------------------------------------


def read_csv(path, label_col: str | None = None) -> Dataset:
    """Read a numeric CSV with a header row.  ``label_col`` names the ground
    truth column; its values may be arbitrary strings and become class ids."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        rows = list(reader)
    if label_col is not None and label_col not in header:
        raise ParseError(f"{path}: no column named {label_col!r}")
    label_idx = header.index(label_col) if label_col is not None else None

    names = [h for i, h in enumerate(header) if i != label_idx]
    values = np.empty((len(rows), len(names)))
    raw_labels = []
    for r, row in enumerate(rows):
        if len(row) != len(header):
            raise ParseError(f"{path}: row {r + 1} has {len(row)} cells, expected {len(header)}")
        c = 0
        for i, cell in enumerate(row):
            if i == label_idx:
                raw_labels.append(cell)
                continue
            try:
                values[r, c] = float(cell)
            except ValueError:
                raise ParseError(
                    f"{path}: non-numeric cell at row {r + 1} col {header[i]!r}: {cell!r}"
                ) from None
            c += 1
    labels = None
    if label_idx is not None:
        _, labels = np.unique(raw_labels, return_inverse=True)
    return Dataset(values=values, kinds=detect_kinds(values), labels=labels, names=names)


def write_dataset_csv(path, dataset: Dataset, label_name: str = "label") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        names = dataset.names or [f"x{j}" for j in range(dataset.n_attrs)]
        header = list(names)
        if dataset.labels is not None:
            header.append(label_name)
        writer.writerow(header)
        for i in range(dataset.n_samples):
            row = [repr(float(v)) for v in dataset.values[i]]
            if dataset.labels is not None:
                row.append(str(int(dataset.labels[i])))
            writer.writerow(row)


def write_assignments(path, assign, resp=None) -> None:
    """CSV with row_index, cluster, and the responsibility columns when soft."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        k = resp.shape[1] if resp is not None else 0
        writer.writerow(["row_index", "cluster"] + [f"r_{h}" for h in range(k)])
        for i, a in enumerate(assign):
            row = [str(i), str(int(a))]
            if resp is not None:
                row += [repr(float(v)) for v in resp[i]]
            writer.writerow(row)


def write_model(path, params: MixtureParams, *, quasi_loglik: float, config: dict, seed) -> None:
    """Serialize a fitted model as JSON with a fixed field order."""
    doc = {
        "families": [fam.name for fam in params.families],
        "alpha": [float(v) for v in params.alpha],
        "kappa": [float(v) for v in params.kappa],
        "pi": [float(v) for v in params.pi],
        "mu": [[float(v) for v in row] for row in params.mu],
        "quasi_loglik": float(quasi_loglik),
        "config": config,
        "seed": seed,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def read_model(path) -> tuple[MixtureParams, dict]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    families = [family_from_name(name) for name in doc["families"]]
    params = MixtureParams(
        pi=np.asarray(doc["pi"], dtype=float),
        mu=np.asarray(doc["mu"], dtype=float),
        kappa=np.asarray(doc["kappa"], dtype=float),
        alpha=np.asarray(doc["alpha"], dtype=float),
        families=families,
    )
    return params, doc


def sample_mixture(params: MixtureParams, n: int, rng: np.random.Generator, *, atol=1e-6):
    """Sample from a fitted mixture whose attributes sit at named members
    (sampling arbitrary hyper-parameters is out of scope).

    Count attributes are always samplable: the modified saddle-point density
    with dispersion kappa equals the unit-dispersion member with
    overdispersion alpha * kappa, i.e. Poisson or negative binomial.
    """
    from .edm import MorrisCount, MorrisReal

    labels = rng.choice(params.n_components, size=n, p=params.pi / params.pi.sum())
    values = np.empty((n, params.n_attrs))
    for j, fam in enumerate(params.families):
        a, kap = float(params.alpha[j]), float(params.kappa[j])
        for h in range(params.n_components):
            idx = labels == h
            m = int(idx.sum())
            if m == 0:
                continue
            mu = float(params.mu[h, j])
            if isinstance(fam, MorrisCount):
                over = a * kap
                if over <= atol:
                    values[idx, j] = rng.poisson(mu, m).astype(float)
                else:
                    values[idx, j] = rng.poisson(rng.gamma(1.0 / over, over * mu, m)).astype(float)
            elif isinstance(fam, MorrisReal):
                if a > atol:
                    raise DomainError(
                        f"attribute {j}: real-line member with alpha={a:.4f} is not "
                        "exactly samplable"
                    )
                values[idx, j] = rng.normal(mu, np.sqrt(kap), m)
            else:
                if abs(a - 2.0) <= atol:
                    values[idx, j] = rng.normal(mu, np.sqrt(kap), m)
                elif abs(a - 1.0) <= atol:
                    # scaled Poisson on the kappa-lattice
                    values[idx, j] = kap * rng.poisson(mu / kap, m)
                elif abs(a) <= atol:
                    values[idx, j] = rng.gamma(1.0 / kap, mu * kap, m)
                elif abs(a + 1.0) <= atol:
                    values[idx, j] = rng.wald(mu, 1.0 / kap, m)
                else:
                    raise DomainError(
                        f"attribute {j}: power-family member with alpha={a:.4f} is "
                        "not a named member; cannot sample exactly"
                    )
    return values, labels
