"""Censored log-likelihoods and their gradients in the additive predictors.

Each bivariate observation contributes one of four terms, selected by its
event indicators (1 = observed):

    (0, 0)  log C(S1, S2)
    (0, 1)  log dC/dS2 + log f2
    (1, 0)  log dC/dS1 + log f1
    (1, 1)  log c(S1, S2) + log f1 + log f2

where dC/dS1 and dC/dS2 are the copula h-functions evaluated at (S1, S2).
Gradients returned here are raw: ``+d loglik / d eta`` (the negative
gradient of the loss), without stabilisation.
"""
from dataclasses import dataclass
from typing import Dict

import numpy as np

from . import copulas, margins
from .copulas import CopulaFamily
from .errors import NonFiniteError
from .margins import MarginFamily

PARAMETERS = ("margin1_theta1", "margin1_theta2", "margin2_theta1", "margin2_theta2", "copula")
MARGIN_PARAMETERS = {1: PARAMETERS[0:2], 2: PARAMETERS[2:4]}
CASE_TERMS = ("C", "h2", "h1", "c")


def censoring_case(delta1, delta2):
    """0: both censored, 1: only second observed, 2: only first, 3: both."""
    return 2 * np.asarray(delta1, dtype=int) + np.asarray(delta2, dtype=int)


def _raise_nonfinite(values, what, rows=None):
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        idx = bad if rows is None else np.asarray(rows)[bad]
        raise NonFiniteError(f"non-finite {what} at observations {idx[:10].tolist()}", idx)


# ---------------------------------------------------------------- univariate

def loglik_univariate(y, delta, family, eta1, eta2):
    """delta * log f + (1 - delta) * log S for each observation."""
    ev = margins.evaluate(family, y, eta1, eta2)
    delta = np.asarray(delta)
    return np.where(delta == 1, ev.logf, ev.logS)


def univariate_terms(y, delta, family, eta1, eta2):
    """Log-likelihood and its gradients in both predictors."""
    ev = margins.evaluate(family, y, eta1, eta2)
    d = np.asarray(delta) == 1
    p = ev.partials
    ll = np.where(d, ev.logf, ev.logS)
    g1 = np.where(d, p.dlogf_deta1, p.dlogS_deta1)
    g2 = np.where(d, p.dlogf_deta2, p.dlogS_deta2)
    return ll, g1, g2


# ----------------------------------------------------------------- bivariate

@dataclass
class ParameterSurface:
    """Per-observation predictors for all five distribution parameters."""

    margin1: MarginFamily
    margin2: MarginFamily
    copula: CopulaFamily
    eta: Dict[str, np.ndarray]

    def theta(self):
        t11, t12 = margins.response(self.margin1, self.eta[PARAMETERS[0]], self.eta[PARAMETERS[1]])
        t21, t22 = margins.response(self.margin2, self.eta[PARAMETERS[2]], self.eta[PARAMETERS[3]])
        tc = copulas.response(self.copula, self.eta[PARAMETERS[4]])
        return dict(zip(PARAMETERS, (t11, t12, t21, t22, tc)))

    def row(self, i):
        return {k: np.asarray(v)[i] for k, v in self.eta.items()}


def copula_case_terms(cop, cases, u1, u2, theta, derivs=False):
    """Censoring-case copula log term and (optionally) its partials."""
    n = len(cases)
    theta = np.broadcast_to(np.asarray(theta, dtype=float), (n,))
    L = np.empty(n)
    if derivs:
        Lu1, Lu2, Lt = np.empty(n), np.empty(n), np.empty(n)
    for case, term in enumerate(CASE_TERMS):
        m = cases == case
        if not m.any():
            continue
        out = copulas.log_term(cop, term, u1[m], u2[m], theta[m], derivs=derivs)
        if derivs:
            L[m], Lu1[m], Lu2[m], Lt[m] = out
        else:
            L[m] = out
    return (L, Lu1, Lu2, Lt) if derivs else L


def _clip_u(logS):
    return np.clip(np.exp(logS), copulas.U_EPS, 1.0 - copulas.U_EPS)


def bivariate_terms(y1, d1, y2, d2, margin1, margin2, cop, eta, want=(), check=True):
    """Bivariate log-likelihood per observation and gradients for ``want``.

    ``eta`` maps every name in PARAMETERS to an array aligned with ``y1``.
    Returns ``(ll, {param: +d ll / d eta_param})``.
    """
    d1 = np.asarray(d1)
    d2 = np.asarray(d2)
    ev1 = margins.evaluate(margin1, y1, eta[PARAMETERS[0]], eta[PARAMETERS[1]])
    ev2 = margins.evaluate(margin2, y2, eta[PARAMETERS[2]], eta[PARAMETERS[3]])
    u1, u2 = _clip_u(ev1.logS), _clip_u(ev2.logS)
    theta = copulas.response(cop, eta[PARAMETERS[4]])
    cases = censoring_case(d1, d2)
    derivs = bool(want)
    terms = copula_case_terms(cop, cases, u1, u2, theta, derivs=derivs)
    L = terms[0] if derivs else terms
    ll = L + np.where(d1 == 1, ev1.logf, 0.0) + np.where(d2 == 1, ev2.logf, 0.0)
    if check:
        _raise_nonfinite(ll, "bivariate log-likelihood")
    grads = {}
    if derivs:
        _, Lu1, Lu2, Lt = terms
        p1, p2 = ev1.partials, ev2.partials
        for name in want:
            if name == PARAMETERS[0]:
                g = Lu1 * p1.dS_deta1 + np.where(d1 == 1, p1.dlogf_deta1, 0.0)
            elif name == PARAMETERS[1]:
                g = Lu1 * p1.dS_deta2 + np.where(d1 == 1, p1.dlogf_deta2, 0.0)
            elif name == PARAMETERS[2]:
                g = Lu2 * p2.dS_deta1 + np.where(d2 == 1, p2.dlogf_deta1, 0.0)
            elif name == PARAMETERS[3]:
                g = Lu2 * p2.dS_deta2 + np.where(d2 == 1, p2.dlogf_deta2, 0.0)
            elif name == PARAMETERS[4]:
                g = Lt * copulas.dtheta_deta(cop, theta)
            else:
                raise KeyError(name)
            if check:
                _raise_nonfinite(g, f"gradient for {name}")
            grads[name] = g
    return ll, grads


def loglik_bivariate(y1, d1, y2, d2, margin1, margin2, cop, eta):
    """Per-observation bivariate censored log-likelihood."""
    return bivariate_terms(y1, d1, y2, d2, margin1, margin2, cop, eta)[0]


def neg_gradients_bivariate(dataset, surface, which):
    """Negative gradient of the loss (= +d loglik/d eta) for one parameter."""
    _, g = bivariate_terms(dataset.time1, dataset.status1, dataset.time2, dataset.status2,
                           surface.margin1, surface.margin2, surface.copula, surface.eta,
                           want=(which,))
    return g[which]


def empirical_risk(loglik, weights=None):
    """Mean negative log-likelihood over the observations with weight 1."""
    loglik = np.asarray(loglik, dtype=float)
    if weights is not None:
        sel = np.asarray(weights).astype(bool)
        loglik = loglik[sel]
    if loglik.size == 0:
        raise ValueError("empirical risk over an empty selection")
    return -float(np.mean(loglik))
