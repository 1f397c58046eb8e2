"""Distribution registry with elementwise log-densities and their partials.

Each ``logp`` function takes broadcast-compatible arrays ``(x, *params)`` and
returns ``(lp, partials)`` where ``lp`` is the elementwise log-density with
the broadcast shape and ``partials[j]`` is d lp / d input_j with the same
shape (index 0 is the value). Values outside the support, or parameters
outside their domain, give ``-inf`` rather than raising.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from scipy.special import betaln, digamma, gammaln, xlog1py, xlogy

REAL = "real"
POSITIVE = "positive"
UNIT = "unit-interval"
NONNEG_INT = "nonneg-int"
ORDERED = "ordered-pair"

SUPPORT_REAL = "real-line"
SUPPORT_POSITIVE = "positive"
SUPPORT_UNIT = "unit-interval"
SUPPORT_NONNEG_INT = "nonneg-int"
SUPPORT_BINARY = "binary"
SUPPORT_INTERVAL = "interval"  # bounded by the (lower, upper) parameters

_LOG_2PI = float(np.log(2 * np.pi))
_LOG_PI = float(np.log(np.pi))
_not = np.logical_not


@dataclass(frozen=True)
class ParamSpec:
    name: str
    domain: str


@dataclass(frozen=True)
class DistributionSpec:
    name: str
    params: Tuple[ParamSpec, ...]
    support: str
    continuous: bool
    logp: Callable

    @property
    def param_names(self) -> Tuple[str, ...]:
        return tuple(p.name for p in self.params)

    def param(self, name: str) -> Optional[ParamSpec]:
        for p in self.params:
            if p.name == name:
                return p
        return None


def in_domain(value: float, domain: str) -> bool:
    """Static check for a literal parameter value."""
    if not np.isfinite(value):
        return False
    if domain == POSITIVE:
        return value > 0
    if domain == UNIT:
        return 0 <= value <= 1
    if domain == NONNEG_INT:
        return value >= 0 and float(value).is_integer()
    return True


def _bad(lp, *conds):
    bad = None
    for c in conds:
        if isinstance(c, np.ndarray) and c.ndim:
            if c.any():
                bad = c if bad is None else bad | c
        elif c:
            bad = True if bad is None else bad | c
    if bad is None:
        return lp
    return np.where(np.broadcast_to(bad, np.shape(lp)), -np.inf, lp)


def _normal(x, mu, sigma):
    z = (x - mu) / sigma
    lp = -0.5 * _LOG_2PI - np.log(sigma) - 0.5 * z * z
    dx = -z / sigma
    dsigma = (z * z - 1.0) / sigma
    lp = _bad(lp, _not(sigma > 0))
    return lp, (dx, -dx, dsigma)


def _half_normal(x, sigma):
    lp = 0.5 * np.log(2 / np.pi) - np.log(sigma) - 0.5 * (x / sigma) ** 2
    dx = -x / sigma ** 2
    dsigma = (x * x / sigma ** 2 - 1.0) / sigma
    lp = _bad(lp, _not(sigma > 0), x < 0)
    return lp, (dx, dsigma)


def _cauchy(x, mu, gamma):
    z = (x - mu) / gamma
    q = 1.0 + z * z
    lp = -_LOG_PI - np.log(gamma) - np.log(q)
    dx = -2.0 * z / (gamma * q)
    dgamma = (2.0 * z * z / q - 1.0) / gamma
    lp = _bad(lp, _not(gamma > 0))
    return lp, (dx, -dx, dgamma)


def _half_cauchy(x, beta):
    q = beta * beta + x * x
    lp = np.log(2 / np.pi) + np.log(beta) - np.log(q)
    dx = -2.0 * x / q
    dbeta = 1.0 / beta - 2.0 * beta / q
    lp = _bad(lp, _not(beta > 0), x < 0)
    return lp, (dx, dbeta)


def _exponential(x, rate):
    lp = np.log(rate) - rate * x
    lp = _bad(lp, _not(rate > 0), x < 0)
    return lp, (-rate * np.ones_like(x), 1.0 / rate - x)


def _uniform(x, lower, upper):
    width = upper - lower
    lp = -np.log(width) + 0.0 * x
    inv = 1.0 / width
    lp = _bad(lp, _not(width > 0), x < lower, x > upper)
    return lp, (np.zeros_like(lp), inv + 0.0 * x, -inv + 0.0 * x)


def _beta(x, a, b):
    lp = xlogy(a - 1.0, x) + xlog1py(b - 1.0, -x) - betaln(a, b)
    dx = (a - 1.0) / x - (b - 1.0) / (1.0 - x)
    psab = digamma(a + b)
    da = np.log(x) - digamma(a) + psab
    db = np.log1p(-x) - digamma(b) + psab
    lp = _bad(lp, _not(a > 0), _not(b > 0), x < 0, x > 1)
    return lp, (dx, da, db)


def _gamma(x, a, rate):
    lp = xlogy(a, rate) + xlogy(a - 1.0, x) - rate * x - gammaln(a)
    dx = (a - 1.0) / x - rate
    da = np.log(rate) + np.log(x) - digamma(a)
    drate = a / rate - x
    lp = _bad(lp, _not(a > 0), _not(rate > 0), x < 0)
    return lp, (dx, da, drate)


def _lognormal(x, mu, sigma):
    logx = np.log(x)
    z = (logx - mu) / sigma
    lp = -logx - np.log(sigma) - 0.5 * _LOG_2PI - 0.5 * z * z
    dx = -(1.0 + z / sigma) / x
    dmu = z / sigma
    dsigma = (z * z - 1.0) / sigma
    lp = _bad(lp, _not(sigma > 0), _not(x > 0))
    return lp, (dx, dmu, dsigma)


def _student_t(x, nu, mu, sigma):
    z = (x - mu) / sigma
    r = z * z / nu
    lp = (
        gammaln(0.5 * (nu + 1.0))
        - gammaln(0.5 * nu)
        - 0.5 * np.log(nu * np.pi)
        - np.log(sigma)
        - 0.5 * (nu + 1.0) * np.log1p(r)
    )
    dx = -(nu + 1.0) * z / (sigma * (nu + z * z))
    dsigma = -1.0 / sigma + (nu + 1.0) * z * z / (sigma * (nu + z * z))
    dnu = (
        0.5 * digamma(0.5 * (nu + 1.0))
        - 0.5 * digamma(0.5 * nu)
        - 0.5 / nu
        - 0.5 * np.log1p(r)
        + 0.5 * (nu + 1.0) * z * z / (nu * (nu + z * z))
    )
    lp = _bad(lp, _not(nu > 0), _not(sigma > 0))
    return lp, (dx, dnu, -dx, dsigma)


def _not_count(x):
    return (x < 0) | (np.floor(x) != x)


def _binomial(k, n, p):
    lp = (
        gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)
        + xlogy(k, p) + xlog1py(n - k, -p)
    )
    dp = k / p - (n - k) / (1.0 - p)
    dn = digamma(n + 1.0) - digamma(n - k + 1.0) + np.log1p(-p)
    lp = _bad(lp, _not_count(k), k > n, _not_count(n), p < 0, p > 1)
    return lp, (np.zeros_like(lp), dn, dp)


def _poisson(k, rate):
    lp = xlogy(k, rate) - rate - gammaln(k + 1.0)
    drate = k / rate - 1.0
    lp = _bad(lp, _not_count(k), rate < 0)
    return lp, (np.zeros_like(lp), drate)


def _bernoulli(k, p):
    lp = xlogy(k, p) + xlog1py(1.0 - k, -p)
    dp = k / p - (1.0 - k) / (1.0 - p)
    lp = _bad(lp, (k != 0) & (k != 1), p < 0, p > 1)
    return lp, (np.zeros_like(lp), dp)


def _spec(name, params, support, continuous, fn):
    return DistributionSpec(name, tuple(ParamSpec(n, d) for n, d in params), support, continuous, fn)


def register_builtin_distributions() -> Dict[str, DistributionSpec]:
    """The library of distributions a program may use, keyed by name."""
    specs = [
        _spec("Normal", [("mu", REAL), ("sigma", POSITIVE)], SUPPORT_REAL, True, _normal),
        _spec("HalfNormal", [("sigma", POSITIVE)], SUPPORT_POSITIVE, True, _half_normal),
        _spec("HalfCauchy", [("beta", POSITIVE)], SUPPORT_POSITIVE, True, _half_cauchy),
        _spec("Cauchy", [("mu", REAL), ("gamma", POSITIVE)], SUPPORT_REAL, True, _cauchy),
        _spec("Exponential", [("rate", POSITIVE)], SUPPORT_POSITIVE, True, _exponential),
        _spec("Uniform", [("lower", ORDERED), ("upper", ORDERED)], SUPPORT_INTERVAL, True, _uniform),
        _spec("Beta", [("alpha", POSITIVE), ("beta", POSITIVE)], SUPPORT_UNIT, True, _beta),
        _spec("Gamma", [("alpha", POSITIVE), ("rate", POSITIVE)], SUPPORT_POSITIVE, True, _gamma),
        _spec("LogNormal", [("mu", REAL), ("sigma", POSITIVE)], SUPPORT_POSITIVE, True, _lognormal),
        _spec(
            "StudentT",
            [("nu", POSITIVE), ("mu", REAL), ("sigma", POSITIVE)],
            SUPPORT_REAL,
            True,
            _student_t,
        ),
        _spec("Binomial", [("n", NONNEG_INT), ("p", UNIT)], SUPPORT_NONNEG_INT, False, _binomial),
        _spec("Poisson", [("rate", POSITIVE)], SUPPORT_NONNEG_INT, False, _poisson),
        _spec("Bernoulli", [("p", UNIT)], SUPPORT_BINARY, False, _bernoulli),
    ]
    return {s.name: s for s in specs}


REGISTRY = register_builtin_distributions()


def supports_values(spec: DistributionSpec, values) -> bool:
    """Whether observed ``values`` can lie in the support of ``spec``."""
    v = np.asarray(values, dtype=float)
    integral = bool(np.all(np.floor(v) == v))
    if spec.support == SUPPORT_REAL or spec.support == SUPPORT_INTERVAL:
        return True
    if spec.support == SUPPORT_POSITIVE:
        return bool(np.all(v > 0))
    if spec.support == SUPPORT_UNIT:
        return bool(np.all((v > 0) & (v < 1)))
    if spec.support == SUPPORT_NONNEG_INT:
        return integral and bool(np.all(v >= 0))
    if spec.support == SUPPORT_BINARY:
        return bool(np.all((v == 0) | (v == 1)))
    return False
