"""Parametric AFT margins: Weibull, log-normal and log-logistic.

Every family has two parameters ``theta1`` (scale / location) and ``theta2``
(shape / spread).  All parameters use a log link except the log-normal
``theta1``, which uses the identity link.

Survival and density are evaluated on the log scale and exponentiated last.
The log-logistic survival is implemented as ``1 / (1 + (t/theta1)**theta2)``;
the textbook form ``1 - 1/(1 + (t/theta1)**(-theta2))`` is algebraically the
same function.
"""
from enum import Enum
from typing import NamedTuple

import numpy as np
from scipy import special

from .errors import DomainError

ETA_CLAMP = 15.0
_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


class MarginFamily(str, Enum):
    WEIBULL = "WEIBULL"
    LOGNORMAL = "LOGNORMAL"
    LOGLOGISTIC = "LOGLOGISTIC"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        key = str(name).upper().replace("-", "").replace("_", "").replace(" ", "")
        try:
            return cls(key)
        except ValueError:
            raise DomainError(f"unknown margin family {name!r}") from None

    @property
    def n_params(self):
        return 2


class MarginParams(NamedTuple):
    theta1: float
    theta2: float


class MarginPartials(NamedTuple):
    """Partials of log S, log f and S with respect to the two predictors."""

    dlogS_deta1: np.ndarray
    dlogS_deta2: np.ndarray
    dlogf_deta1: np.ndarray
    dlogf_deta2: np.ndarray
    dS_deta1: np.ndarray
    dS_deta2: np.ndarray


class MarginEval(NamedTuple):
    logS: np.ndarray
    logf: np.ndarray
    partials: MarginPartials


def clamp_eta(eta):
    return np.clip(eta, -ETA_CLAMP, ETA_CLAMP)


def response(family, eta1, eta2):
    """Map predictors to natural-scale parameters (inverse links)."""
    family = MarginFamily.parse(family)
    eta1 = np.asarray(eta1, dtype=float)
    eta2 = np.asarray(eta2, dtype=float)
    theta2 = np.exp(clamp_eta(eta2))
    if family is MarginFamily.LOGNORMAL:
        return eta1, theta2
    return np.exp(clamp_eta(eta1)), theta2


def link(family, theta1, theta2):
    """Map natural-scale parameters to predictors."""
    family = MarginFamily.parse(family)
    _check_params(family, theta1, theta2)
    theta1 = np.asarray(theta1, dtype=float)
    eta2 = np.log(theta2)
    if family is MarginFamily.LOGNORMAL:
        return theta1, eta2
    return np.log(theta1), eta2


def _check_time(t):
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise DomainError("event times must be strictly positive")
    return t


def _check_params(family, theta1, theta2):
    if np.any(~(np.asarray(theta2) > 0)):
        raise DomainError("theta2 must be strictly positive")
    if family is not MarginFamily.LOGNORMAL and np.any(~(np.asarray(theta1) > 0)):
        raise DomainError(f"theta1 of {family.value} must be strictly positive")


def _standardized(family, logt, theta1, theta2):
    # Weibull / log-logistic: w = log((t/theta1)**theta2); log-normal: z-score.
    if family is MarginFamily.LOGNORMAL:
        return (logt - theta1) / theta2
    return theta2 * (logt - np.log(theta1))


def _log_sf_pdf(family, t, theta1, theta2):
    logt = np.log(t)
    w = _standardized(family, logt, theta1, theta2)
    if family is MarginFamily.WEIBULL:
        # overflow gives log S = -inf, the exact limit
        with np.errstate(over="ignore"):
            z = np.exp(w)
        return -z, np.log(theta2) - logt + w - z
    if family is MarginFamily.LOGLOGISTIC:
        sp = np.logaddexp(0.0, w)
        return -sp, np.log(theta2) - logt + w - 2.0 * sp
    log_sf = special.log_ndtr(-w)
    return log_sf, -0.5 * w * w - _LOG_SQRT_2PI - logt - np.log(theta2)


def log_survival(family, t, theta1, theta2):
    family = MarginFamily.parse(family)
    t = _check_time(t)
    _check_params(family, theta1, theta2)
    return _log_sf_pdf(family, t, np.asarray(theta1, float), np.asarray(theta2, float))[0]


def log_density(family, t, theta1, theta2):
    family = MarginFamily.parse(family)
    t = _check_time(t)
    _check_params(family, theta1, theta2)
    return _log_sf_pdf(family, t, np.asarray(theta1, float), np.asarray(theta2, float))[1]


def survival(family, t, theta1, theta2):
    """Marginal survival function S(t) = P(T > t)."""
    return np.exp(log_survival(family, t, theta1, theta2))


def survival_curve(family, times, theta1, theta2):
    """Survival matrix (len(theta1), len(times)); S(0) = 1 for zero times."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < 0):
        raise DomainError("times must be non-negative")
    pos = times > 0
    out = survival(family, np.where(pos, times, 1.0)[None, :],
                   np.asarray(theta1, float)[:, None], np.asarray(theta2, float)[:, None])
    return np.where(pos[None, :], out, 1.0)


def density(family, t, theta1, theta2):
    """Marginal density f(t) = -dS/dt."""
    return np.exp(log_density(family, t, theta1, theta2))


def quantile(family, u, theta1, theta2):
    """Inverse survival function: the time t with S(t) = u."""
    family = MarginFamily.parse(family)
    u = np.asarray(u, dtype=float)
    if np.any(~((u > 0) & (u < 1))):
        raise DomainError("survival level must lie in (0, 1)")
    _check_params(family, theta1, theta2)
    theta1 = np.asarray(theta1, dtype=float)
    theta2 = np.asarray(theta2, dtype=float)
    if family is MarginFamily.WEIBULL:
        # (t/theta1)**theta2 = -log(u)
        return theta1 * np.exp(np.log(-np.log(u)) / theta2)
    if family is MarginFamily.LOGLOGISTIC:
        # (t/theta1)**theta2 = (1 - u)/u
        return theta1 * np.exp((np.log1p(-u) - np.log(u)) / theta2)
    return np.exp(theta1 + theta2 * special.ndtri(1.0 - u))


def median(family, theta1, theta2):
    return quantile(family, 0.5, theta1, theta2)


def evaluate(family, t, eta1, eta2):
    """log S, log f and all predictor partials at link-scale values.

    Partials are exact chain-rule derivatives through the inverse links.
    """
    family = MarginFamily.parse(family)
    t = np.asarray(t, dtype=float)
    theta1, theta2 = response(family, eta1, eta2)
    logt = np.log(t)
    w = _standardized(family, logt, theta1, theta2)
    if family is MarginFamily.WEIBULL:
        # overflow gives log S = -inf, the exact limit
        with np.errstate(over="ignore"):
            z = np.exp(w)
        logS = -z
        logf = np.log(theta2) - logt + w - z
        dlogS1, dlogS2 = z * theta2, -z * w
        dlogf1, dlogf2 = -theta2 * (1.0 - z), 1.0 + w * (1.0 - z)
    elif family is MarginFamily.LOGLOGISTIC:
        sp = np.logaddexp(0.0, w)
        sig = special.expit(w)
        logS = -sp
        logf = np.log(theta2) - logt + w - 2.0 * sp
        dlogS1, dlogS2 = sig * theta2, -sig * w
        dlogf1, dlogf2 = -theta2 * (1.0 - 2.0 * sig), 1.0 + w * (1.0 - 2.0 * sig)
    else:
        logS = special.log_ndtr(-w)
        logf = -0.5 * w * w - _LOG_SQRT_2PI - logt - np.log(theta2)
        mills = np.exp(-0.5 * w * w - _LOG_SQRT_2PI - logS)
        dlogS1, dlogS2 = mills / theta2, mills * w
        dlogf1, dlogf2 = w / theta2, w * w - 1.0
    S = np.exp(logS)
    partials = MarginPartials(dlogS1, dlogS2, dlogf1, dlogf2, S * dlogS1, S * dlogS2)
    return MarginEval(logS, logf, partials)


def margin_partials(family, t, eta1, eta2):
    """Partials (dlogS, dlogf, dS) with respect to both predictors."""
    _check_time(t)
    return evaluate(family, t, eta1, eta2).partials
