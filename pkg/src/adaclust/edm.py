"""Parametrized families of steep exponential dispersion models.

Three families are provided, each a one-hyper-parameter class of steep EDMs
identified by its unit variance function:

* :class:`MorrisCount`  -- quadratic variance ``x * (1 + alpha * x)`` on counts;
  contains Poisson (``alpha = 0``) and negative binomial (``alpha = 1``).
* :class:`MorrisReal`   -- quadratic variance ``1 + alpha * x**2`` on the real
  line; contains Gaussian (``alpha = 0``) and generalized hyperbolic secant
  (``alpha = 1``).
* :class:`Tweedie`      -- power variance ``x**(2 - alpha)`` on positive or
  non-negative reals; contains inverse-Gaussian (``alpha = -1``), gamma
  (``alpha = 0``), Poisson (``alpha = 1``) and Gaussian (``alpha = 2``).

Each family exposes the Bregman divergence generated by its convex generator
function, the variance function, their derivatives in ``alpha``, the
mean-value mapping between natural and mean parameters, and the saddle-point
log density.  Densities of discrete members (and of the point mass at zero
for the non-negative Tweedie family) use the modified saddle-point form with
a small additive constant ``c``.

All operations are pure functions of their arguments, accept scalars or
arrays (with broadcasting between data and mean arguments), and raise
:class:`~adaclust.errors.DomainError` on domain violations instead of
clamping.  Densities are computed in the log domain throughout.
"""

from __future__ import annotations

import math
from enum import Enum

import numpy as np

from .errors import DomainError

# Hard switch to closed-form limit expressions this close to a branch point;
# the raw formulas suffer catastrophic cancellation there.
BRANCH_TOL = 1e-12
# Within this distance of a branch point, alpha-derivatives use first-order
# series instead of the rearranged general forms.
_SERIES_TOL = 1e-4

_LOG_2PI = math.log(2.0 * math.pi)


class AttributeKind(Enum):
    """Support classification of one data attribute.

    ``UNIT_INTERVAL`` is a pseudo-kind: unit-interval data is mapped through
    the logit transform to ``REAL_CONTINUOUS`` before any family is attached,
    so it never reaches a family directly.
    """

    NON_NEGATIVE_DISCRETE = "non-negative-discrete"
    POSITIVE_DISCRETE = "positive-discrete"
    REAL_CONTINUOUS = "real-continuous"
    NON_NEGATIVE_CONTINUOUS = "non-negative-continuous"
    POSITIVE_CONTINUOUS = "positive-continuous"
    UNIT_INTERVAL = "unit-interval"

    @property
    def is_discrete(self) -> bool:
        return self in (
            AttributeKind.NON_NEGATIVE_DISCRETE,
            AttributeKind.POSITIVE_DISCRETE,
        )


def _asarray(x) -> np.ndarray:
    return np.asarray(x, dtype=float)


def _maybe_scalar(out: np.ndarray, *inputs):
    if all(np.ndim(v) == 0 for v in inputs):
        return float(out)
    return out


def _xlogxy(x: np.ndarray, y) -> np.ndarray:
    """x * log(x / y) with the x -> 0 limit of 0."""
    positive = x > 0
    safe = np.where(positive, x, 1.0)
    return np.where(positive, x * (np.log(safe) - np.log(y)), 0.0)


class Family:
    """One parametrized class of steep EDMs.

    Concrete subclasses define the divergence generator ``phi(t | alpha)``
    and its derivatives; this base class provides the checked public API and
    the saddle-point densities.  Instances are immutable and safe to share
    across threads.
    """

    name: str
    support: AttributeKind
    alpha_domain: tuple[float, float]
    discrete: bool
    saddle_c: float
    positive_mean: bool
    default_alpha: float

    # -- domain checks -------------------------------------------------

    def check_alpha(self, alpha: float) -> float:
        alpha = float(alpha)
        lo, hi = self.alpha_domain
        if not (lo <= alpha <= hi):
            raise DomainError(
                f"{self.name}: alpha={alpha} outside working domain [{lo}, {hi}]"
            )
        return alpha

    def check_support(self, x: np.ndarray) -> None:
        """x must lie in the convex support C."""
        if not np.all(np.isfinite(x)):
            raise DomainError(f"{self.name}: non-finite data value")
        if self.positive_mean:
            lo_ok = np.all(x > 0) if not self._support_includes_zero else np.all(x >= 0)
            if not lo_ok:
                bound = "x >= 0" if self._support_includes_zero else "x > 0"
                raise DomainError(f"{self.name}: data outside convex support ({bound})")

    def check_mean(self, y: np.ndarray) -> None:
        """y must lie in the interior of C."""
        if not np.all(np.isfinite(y)):
            raise DomainError(f"{self.name}: non-finite mean value")
        if self.positive_mean and not np.all(y > 0):
            raise DomainError(f"{self.name}: mean outside interior of support (y > 0)")

    @property
    def _support_includes_zero(self) -> bool:
        return self.support in (
            AttributeKind.NON_NEGATIVE_DISCRETE,
            AttributeKind.NON_NEGATIVE_CONTINUOUS,
        )

    # -- public checked operations --------------------------------------

    def divergence(self, x, y, alpha):
        """Bregman divergence d(x, y | alpha), non-negative, zero iff x == y."""
        x, y = _asarray(x), _asarray(y)
        alpha = self.check_alpha(alpha)
        self.check_support(x)
        self.check_mean(y)
        return _maybe_scalar(self._div(x, y, alpha), x, y)

    def divergence_dalpha(self, x, y, alpha):
        """Partial derivative of the divergence in alpha (limit at branch points)."""
        x, y = _asarray(x), _asarray(y)
        alpha = self.check_alpha(alpha)
        self.check_support(x)
        self.check_mean(y)
        out = (
            self._gen_da(x, alpha)
            - self._gen_da(y, alpha)
            - (x - y) * self._gen_prime_da(y, alpha)
        )
        return _maybe_scalar(out, x, y)

    def variance(self, x, alpha):
        """Unit variance function v(x | alpha) on the mean domain."""
        x = _asarray(x)
        alpha = self.check_alpha(alpha)
        self.check_mean(x)
        return _maybe_scalar(self._var(x, alpha), x)

    def variance_dalpha(self, x, alpha):
        x = _asarray(x)
        alpha = self.check_alpha(alpha)
        self.check_mean(x)
        return _maybe_scalar(self._var_da(x, alpha), x)

    def edm_variance(self, mu, kappa, alpha):
        """Variance of the dispersed model: kappa * v(mu | alpha)."""
        return kappa * self.variance(mu, alpha)

    def generator(self, t, alpha):
        """Convex generator phi(t | alpha) of the divergence."""
        t = _asarray(t)
        alpha = self.check_alpha(alpha)
        self.check_support(t)
        return _maybe_scalar(self._gen(t, alpha), t)

    def generator_prime(self, t, alpha):
        """phi'(t | alpha); equals the natural parameter of mean t."""
        t = _asarray(t)
        alpha = self.check_alpha(alpha)
        self.check_mean(t)
        return _maybe_scalar(self._gen_prime(t, alpha), t)

    def generator_dalpha(self, t, alpha):
        t = _asarray(t)
        alpha = self.check_alpha(alpha)
        self.check_support(t)
        return _maybe_scalar(self._gen_da(t, alpha), t)

    def generator_prime_dalpha(self, t, alpha):
        t = _asarray(t)
        alpha = self.check_alpha(alpha)
        self.check_mean(t)
        return _maybe_scalar(self._gen_prime_da(t, alpha), t)

    def mean_value(self, theta, alpha):
        """Mean-value mapping tau(theta | alpha), natural -> mean parameter."""
        theta = _asarray(theta)
        alpha = self.check_alpha(alpha)
        out = self._mean_value(theta, alpha)
        return _maybe_scalar(out, theta)

    def natural_param(self, x, alpha):
        """Inverse mean-value mapping, mean -> natural parameter."""
        x = _asarray(x)
        alpha = self.check_alpha(alpha)
        self.check_mean(x)
        return _maybe_scalar(self._gen_prime(x, alpha), x)

    def log_density(self, x, mu, kappa, alpha):
        """Saddle-point log density of the dispersed model.

        Continuous members use ``-d(x, mu)/kappa - log(2 pi kappa v(x)) / 2``;
        discrete members use the modified form with arguments scaled by kappa
        and the variance evaluated at ``kappa * x + kappa * c``.
        """
        x, mu = _asarray(x), _asarray(mu)
        alpha = self.check_alpha(alpha)
        kappa = float(kappa)
        if not (kappa > 0):
            raise DomainError(f"{self.name}: kappa must be positive, got {kappa}")
        self.check_support(x)
        self.check_mean(mu)
        if self.discrete:
            out = self._log_density_discrete(x, mu, kappa, alpha)
        else:
            out = self._log_density_continuous(x, mu, kappa, alpha)
        return _maybe_scalar(out, x, mu)

    # -- saddle-point forms ---------------------------------------------

    def _log_density_continuous(self, x, mu, kappa, alpha):
        var = self._var(x, alpha)
        if not np.all(var > 0):
            raise DomainError(
                f"{self.name}: variance function degenerate at a boundary point"
            )
        return (
            -self._div(x, mu, alpha) / kappa
            - 0.5 * (_LOG_2PI + math.log(kappa) + np.log(var))
        )

    def _log_density_discrete(self, x, mu, kappa, alpha):
        var = self._var(kappa * x + kappa * self.saddle_c, alpha)
        if not np.all(var > 0):
            raise DomainError(
                f"{self.name}: variance function degenerate at a boundary point"
            )
        return (
            0.5 * (math.log(kappa) - _LOG_2PI - np.log(var))
            - self._div(kappa * x, kappa * mu, alpha) / kappa
        )

    # -- subclass hooks (unchecked, arrays in / arrays out) --------------

    def _div(self, x, y, a):
        raise NotImplementedError

    def _var(self, x, a):
        raise NotImplementedError

    def _var_da(self, x, a):
        raise NotImplementedError

    def _gen(self, t, a):
        raise NotImplementedError

    def _gen_prime(self, t, a):
        raise NotImplementedError

    def _gen_da(self, t, a):
        raise NotImplementedError

    def _gen_prime_da(self, t, a):
        raise NotImplementedError

    def _mean_value(self, theta, a):
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"{type(self).__name__}(support={self.support.value})"


class MorrisCount(Family):
    """Quadratic-variance count family: v(x | alpha) = x (1 + alpha x).

    Convex support [0, inf), mean domain (0, inf), alpha in [0, inf) with a
    finite working bound.  The saddle-point constant is 1/3 when the support
    includes zero and 0 otherwise.
    """

    alpha_domain = (0.0, 1e3)
    discrete = True
    positive_mean = True
    default_alpha = 0.0

    def __init__(self, support: AttributeKind = AttributeKind.NON_NEGATIVE_DISCRETE):
        if support not in (
            AttributeKind.NON_NEGATIVE_DISCRETE,
            AttributeKind.POSITIVE_DISCRETE,
        ):
            raise ValueError(f"not a count support: {support}")
        self.support = support
        self.saddle_c = 1.0 / 3.0 if support is AttributeKind.NON_NEGATIVE_DISCRETE else 0.0
        self.name = (
            "morris-count-nonnegative"
            if support is AttributeKind.NON_NEGATIVE_DISCRETE
            else "morris-count-positive"
        )

    def _div(self, x, y, a):
        if a < BRANCH_TOL:
            return y - x + _xlogxy(x, y)
        delta = np.log1p(a * y) - np.log1p(a * x)
        return (1.0 / a + x) * delta + _xlogxy(x, y)

    def _var(self, x, a):
        return x * (1.0 + a * x)

    def _var_da(self, x, a):
        return x * x

    def _gen(self, t, a):
        tlogt = _xlogxy(t, 1.0)
        if a < BRANCH_TOL:
            return tlogt - t
        return tlogt - (t + 1.0 / a) * np.log1p(a * t)

    def _gen_prime(self, t, a):
        if a < BRANCH_TOL:
            return np.log(t)
        return np.log(t) - np.log1p(a * t)

    def _gen_da(self, t, a):
        # (log1p(at) - at) / a**2, with a series where a*t is tiny
        if a < BRANCH_TOL:
            return -0.5 * t * t
        u = a * t
        small = u < 1e-3
        direct = np.where(
            small, 0.0, (np.log1p(np.where(small, 0.0, u)) - u) / (a * a)
        )
        series = t * t * (-0.5 + u * (1.0 / 3.0 - 0.25 * u))
        return np.where(small, series, direct)

    def _gen_prime_da(self, t, a):
        return -t / (1.0 + a * t)

    def _mean_value(self, theta, a):
        et = np.exp(theta)
        if a >= BRANCH_TOL:
            if not np.all(a * et < 1.0):
                raise DomainError(
                    f"{self.name}: theta outside natural domain (theta < -log alpha)"
                )
            return et / (1.0 - a * et)
        return et


class MorrisReal(Family):
    """Quadratic-variance real-line family: v(x | alpha) = 1 + alpha x**2.

    Convex support and mean domain are the whole real line; alpha in
    [0, inf) with a finite working bound.
    """

    alpha_domain = (0.0, 1e3)
    discrete = False
    positive_mean = False
    default_alpha = 0.0
    support = AttributeKind.REAL_CONTINUOUS
    saddle_c = 0.0
    name = "morris-real"

    def _div(self, x, y, a):
        if a < BRANCH_TOL:
            return 0.5 * (x - y) ** 2
        s = math.sqrt(a)
        return x * (np.arctan(s * x) - np.arctan(s * y)) / s + (
            np.log1p(a * y * y) - np.log1p(a * x * x)
        ) / (2.0 * a)

    def _var(self, x, a):
        return 1.0 + a * x * x

    def _var_da(self, x, a):
        return x * x

    def _gen(self, t, a):
        if a < BRANCH_TOL:
            return 0.5 * t * t
        s = math.sqrt(a)
        return t * np.arctan(s * t) / s - np.log1p(a * t * t) / (2.0 * a)

    def _gen_prime(self, t, a):
        if a < BRANCH_TOL:
            return t + 0.0
        s = math.sqrt(a)
        return np.arctan(s * t) / s

    def _gen_da(self, t, a):
        # log1p(a t^2)/(2 a^2) - t atan(sqrt(a) t)/(2 a^(3/2)); the two terms
        # cancel to O(1) near a = 0, so switch to a series in u = a t^2 there.
        if a < BRANCH_TOL:
            return -(t**4) / 12.0
        t2 = t * t
        u = a * t2
        small = u < 1e-3
        s = math.sqrt(a)
        u_safe = np.where(small, 1.0, u)
        direct = np.where(
            small,
            0.0,
            np.log1p(u_safe) / (2.0 * a * a)
            - t * np.arctan(s * t) / (2.0 * a * s),
        )
        series = t2 * t2 * (-1.0 / 12.0 + u * (1.0 / 15.0 - (3.0 / 56.0) * u))
        return np.where(small, series, direct)

    def _gen_prime_da(self, t, a):
        # (t/(1 + a t^2) - atan(sqrt(a) t)/sqrt(a)) / (2 a); series near a = 0.
        if a < BRANCH_TOL:
            return -(t**3) / 3.0
        t2 = t * t
        u = a * t2
        small = u < 1e-3
        s = math.sqrt(a)
        direct = np.where(
            small,
            0.0,
            (t / (1.0 + u) - np.arctan(s * t) / s) / (2.0 * a),
        )
        series = t * t2 * (-1.0 / 3.0 + u * (0.4 - (3.0 / 7.0) * u))
        return np.where(small, series, direct)

    def _mean_value(self, theta, a):
        if a < BRANCH_TOL:
            return theta + 0.0
        s = math.sqrt(a)
        if not np.all(np.abs(theta) < 0.5 * math.pi / s):
            raise DomainError(
                f"{self.name}: theta outside natural domain (|theta| < pi/(2 sqrt(alpha)))"
            )
        return np.tan(s * theta) / s


class Tweedie(Family):
    """Power-variance family: v(x | alpha) = x**(2 - alpha).

    With positive-continuous support the convex support is (0, inf) and the
    hyper-parameter domain is (-inf, 2] with a finite working lower bound.
    With non-negative-continuous support the domain is (0, 1] (compound
    Poisson members) and the point mass at zero uses the modified
    saddle-point form.
    """

    discrete = False
    positive_mean = True
    default_alpha = 0.0

    def __init__(self, support: AttributeKind = AttributeKind.POSITIVE_CONTINUOUS):
        if support is AttributeKind.POSITIVE_CONTINUOUS:
            self.alpha_domain = (-20.0, 2.0)
            self.default_alpha = 0.0
            self.name = "tweedie-positive"
        elif support is AttributeKind.NON_NEGATIVE_CONTINUOUS:
            self.alpha_domain = (1e-6, 1.0)
            self.default_alpha = 0.5
            self.name = "tweedie-nonnegative"
        else:
            raise ValueError(f"not a Tweedie support: {support}")
        self.support = support
        self.saddle_c = 1.0 / 3.0

    def _div(self, x, y, a):
        if abs(a) < BRANCH_TOL:
            r = x / y
            return r - np.log(r) - 1.0
        if abs(a - 1.0) < BRANCH_TOL:
            return _xlogxy(x, y) + y - x
        pos = x > 0
        x_safe = np.where(pos, x, 1.0)
        ly = np.log(y)
        if a < 0.5:
            # grouping that stays O(a) near a = 0
            ex = np.expm1(a * np.log(x_safe))
            ey = np.expm1(a * ly)
            num = ex + ey * (a - 1.0 - a * x / y) + a * (1.0 - x / y)
        else:
            # grouping that stays O(a - 1) near a = 1
            b = a - 1.0
            eby = np.expm1(b * ly)
            ebx = np.expm1(b * np.log(x_safe))
            num = x * (ebx - eby) + b * eby * (y - x) + b * (y - x)
        d = num / (a * (a - 1.0))
        if np.all(pos):
            return d
        return np.where(pos, d, np.power(y, a) / a)

    def _var(self, x, a):
        return np.power(x, 2.0 - a)

    def _var_da(self, x, a):
        return -np.power(x, 2.0 - a) * np.log(x)

    def _gen(self, t, a):
        if abs(a) < BRANCH_TOL:
            return t - np.log(t) - 1.0
        if abs(a - 1.0) < BRANCH_TOL:
            return _xlogxy(t, 1.0) - t + 1.0
        pos = t > 0
        t_safe = np.where(pos, t, 1.0)
        lt = np.log(t_safe)
        if a < 0.5:
            num = np.expm1(a * lt) - a * (t - 1.0)
        else:
            b = a - 1.0
            num = t * np.expm1(b * lt) - b * (t - 1.0)
        g = num / (a * (a - 1.0))
        if np.all(pos):
            return g
        return np.where(pos, g, 1.0 / a)

    def _gen_prime(self, t, a):
        if abs(a - 1.0) < BRANCH_TOL:
            return np.log(t)
        return np.expm1((a - 1.0) * np.log(t)) / (a - 1.0)

    def _gen_da(self, t, a):
        pos = t > 0
        t_safe = np.where(pos, t, 1.0)
        lt = np.log(t_safe)
        if abs(a) < _SERIES_TOL:
            lim = t - 0.5 * lt * lt - lt - 1.0
            out = lim + a * (2.0 * t - lt**3 / 3.0 - lt * lt - 2.0 * lt - 2.0)
        elif abs(a - 1.0) < _SERIES_TOL:
            b = a - 1.0
            lim = 0.5 * t * lt * lt - t * lt + t - 1.0
            out = lim + b * (t * lt**3 / 3.0 - t * lt * lt + 2.0 * t * lt - 2.0 * t + 2.0)
        else:
            denom = a * (a - 1.0)
            term1 = (np.power(t_safe, a) * lt - t + 1.0) / denom
            if a < 0.5:
                num2 = np.expm1(a * lt) - a * (t - 1.0)
            else:
                b = a - 1.0
                num2 = t * np.expm1(b * lt) - b * (t - 1.0)
            out = term1 - num2 * (2.0 * a - 1.0) / (denom * denom)
        if np.all(pos):
            return out
        # t = 0 (only inside (0, 1]): phi(0) = 1/alpha, so d(phi)/d(alpha) = -1/alpha^2
        return np.where(pos, out, -1.0 / (a * a))

    def _gen_prime_da(self, t, a):
        lt = np.log(t)
        if abs(a - 1.0) < _SERIES_TOL:
            b = a - 1.0
            return lt * lt * (0.5 + b * lt / 3.0)
        b = a - 1.0
        return (b * np.power(t, b) * lt - np.expm1(b * lt)) / (b * b)

    def _mean_value(self, theta, a):
        if abs(a - 1.0) < BRANCH_TOL:
            return np.exp(theta)
        base = (a - 1.0) * theta + 1.0
        if not np.all(base > 0):
            raise DomainError(f"{self.name}: theta outside natural domain")
        return np.power(base, 1.0 / (a - 1.0))

    def _log_density_continuous(self, x, mu, kappa, alpha):
        # the point mass at zero of compound-Poisson members needs the
        # modified (discrete) saddle-point form
        if self.support is AttributeKind.NON_NEGATIVE_CONTINUOUS and np.any(x == 0.0):
            zero = x == 0.0
            x_safe = np.where(zero, 1.0, x)
            cont = super()._log_density_continuous(x_safe, mu, kappa, alpha)
            disc = self._log_density_discrete(np.asarray(0.0), mu, kappa, alpha)
            return np.where(zero, disc, cont)
        return super()._log_density_continuous(x, mu, kappa, alpha)


def family_for_kind(kind: AttributeKind) -> Family:
    """Family used to model one attribute of the given kind."""
    if kind is AttributeKind.UNIT_INTERVAL:
        raise DomainError(
            "unit-interval attributes must be logit-transformed to the real line first"
        )
    if kind.is_discrete:
        return MorrisCount(kind)
    if kind is AttributeKind.REAL_CONTINUOUS:
        return MorrisReal()
    return Tweedie(kind)


_FAMILY_NAMES = {
    "morris-count-nonnegative": lambda: MorrisCount(AttributeKind.NON_NEGATIVE_DISCRETE),
    "morris-count-positive": lambda: MorrisCount(AttributeKind.POSITIVE_DISCRETE),
    "morris-real": lambda: MorrisReal(),
    "tweedie-positive": lambda: Tweedie(AttributeKind.POSITIVE_CONTINUOUS),
    "tweedie-nonnegative": lambda: Tweedie(AttributeKind.NON_NEGATIVE_CONTINUOUS),
}


def family_from_name(name: str) -> Family:
    """Inverse of ``Family.name``, used when loading serialized models."""
    try:
        return _FAMILY_NAMES[name]()
    except KeyError:
        raise DomainError(f"unknown family name: {name!r}") from None
