"""Closed-form Archimedean copulas and their symbolic derivatives.

The log-CDF of each base family is written by hand; h-functions, densities
and every partial derivative are obtained by exact symbolic differentiation
and compiled to vectorised numpy callables on first use.

For a copula C the chain used is

    log h1 = log C + log(d log C / du1)       (h1 = dC/du1)
    log h2 = log C + log(d log C / du2)       (h2 = dC/du2)
    log c  = log h1 + log(d log h1 / du2)

which keeps every intermediate on the log scale.
"""
from functools import lru_cache

import numpy as np
import sympy as sp
from sympy.codegen.cfunctions import expm1, log1p

U1, U2 = sp.symbols("u1 u2", positive=True)
THETA_POS = sp.Symbol("theta", positive=True)
THETA_REAL = sp.Symbol("theta", real=True)

TERMS = ("C", "h1", "h2", "c")


class nlog(sp.Function):
    """-log(u) on (0, 1): positive, which lets log-expansion split its powers."""

    def fdiff(self, argindex=1):
        return -1 / self.args[0]

    def _eval_is_positive(self):
        return True

    def _eval_is_real(self):
        return True


def _ordered(expr_le, a, b):
    """Select the branch written for a <= b, swapping roles otherwise.

    Every base family is exchangeable, so the swapped branch is the same
    function; the ordering only keeps ratios and powers below one.
    """
    return sp.Piecewise((expr_le(a, b), a <= b), (expr_le(b, a), True))


def _base_log_cdf(kind, a, b, th):
    if kind == "CLAYTON":
        # log(a^-t + b^-t - 1) = -t log a + log1p((a/b)^t - a^t) for a <= b
        return _ordered(lambda x, y: sp.log(x) - log1p((x / y) ** th - x ** th) / th, a, b)
    if kind == "GUMBEL":
        # with p = -log a >= q = -log b: (p^t + q^t)^(1/t) = p (1 + (q/p)^t)^(1/t)
        def g(x, y):
            p, q = nlog(x), nlog(y)
            return -p * sp.exp(log1p((q / p) ** th) / th)
        return _ordered(g, a, b)
    if kind == "JOE":
        # A = 1 - (1-a)^t, B likewise; C = 1 - (1 - A B)^(1/t)
        # log(1 - A B) loses digits as A B -> 1; there (1-a)^t + A (1-b)^t is exact
        A = -expm1(th * log1p(-a))
        B = -expm1(th * log1p(-b))
        Abar = sp.exp(th * log1p(-a))
        Bbar = sp.exp(th * log1p(-b))
        log_s = sp.Piecewise((log1p(-A * B), A * B <= sp.Rational(1, 2)), (sp.log(Abar + A * Bbar), True))
        return sp.log(-expm1(log_s / th))
    if kind == "FRANK":
        return sp.log(-log1p(expm1(-th * a) * expm1(-th * b) / expm1(-th)) / th)
    raise KeyError(kind)


def _rotated_log_cdf(kind, rotation, th):
    if rotation == 0:
        return _base_log_cdf(kind, U1, U2, th)
    if rotation == 90:
        return sp.log(U2 - sp.exp(_base_log_cdf(kind, 1 - U1, U2, th)))
    if rotation == 180:
        return sp.log(U1 + U2 - 1 + sp.exp(_base_log_cdf(kind, 1 - U1, 1 - U2, th)))
    if rotation == 270:
        return sp.log(U1 - sp.exp(_base_log_cdf(kind, U1, 1 - U2, th)))
    raise KeyError(rotation)


def _compile(expr, th):
    return sp.lambdify((U1, U2, th), expr, modules=[{"nlog": lambda x: -np.log(x)}, "numpy"], cse=True)


def _log_of(expr):
    """log of a positive expression, split over products where sympy can.

    Splitting keeps tiny power factors such as (u2/u1)**theta on the log
    scale instead of letting them underflow before the logarithm.
    """
    if isinstance(expr, sp.Piecewise):
        return sp.Piecewise(*((_log_of(e), c) for e, c in expr.args))
    return sp.expand_log(sp.log(expr))


@lru_cache(maxsize=None)
def log_expressions(kind, rotation):
    th = THETA_REAL if kind == "FRANK" else THETA_POS
    log_C = _rotated_log_cdf(kind, rotation, th)
    log_h1 = log_C + _log_of(sp.diff(log_C, U1))
    log_h2 = log_C + _log_of(sp.diff(log_C, U2))
    log_c = log_h1 + _log_of(sp.diff(log_h1, U2))
    return th, {"C": log_C, "h1": log_h1, "h2": log_h2, "c": log_c}


@lru_cache(maxsize=None)
def value_function(kind, rotation, term):
    th, exprs = log_expressions(kind, rotation)
    return _compile(exprs[term], th)


@lru_cache(maxsize=None)
def gradient_function(kind, rotation, term):
    """Callable returning (value, d/du1, d/du2, d/dtheta) of a log term."""
    th, exprs = log_expressions(kind, rotation)
    e = exprs[term]
    return _compile([e, sp.diff(e, U1), sp.diff(e, U2), sp.diff(e, th)], th)


def evaluate(kind, rotation, term, u1, u2, theta, derivs=False):
    with np.errstate(all="ignore"):
        if derivs:
            out = gradient_function(kind, rotation, term)(u1, u2, theta)
            shape = np.broadcast(u1, u2, theta).shape
            return tuple(np.broadcast_to(np.asarray(o, dtype=float), shape) for o in out)
        return np.asarray(value_function(kind, rotation, term)(u1, u2, theta), dtype=float)
