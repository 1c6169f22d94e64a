"""Component-wise base-learners fitted to pseudo-residuals.

A :class:`LearnerPool` holds every candidate learner of one distribution
parameter: a standalone intercept (id 0) followed by one learner per
covariate in formula order.  Linear learners are slope-only fits on a
covariate centred with training means; P-spline learners are cubic
B-splines with a second-order difference penalty whose ridge parameter is
calibrated to a fixed number of effective degrees of freedom.
"""
from typing import NamedTuple

import numpy as np
from scipy.interpolate import BSpline

TIE_TOL = 1e-12


class LearnerFit(NamedTuple):
    learner_id: int
    rss: float
    increment: np.ndarray
    coef: object  # float for intercept/linear, ndarray for P-splines


def fit_intercept(g):
    g = np.asarray(g, dtype=float)
    const = float(np.mean(g))
    inc = np.full_like(g, const)
    return LearnerFit(0, float(np.sum((g - const) ** 2)), inc, const)


def fit_linear(x, g, learner_id=0):
    """Slope-only least squares on a centred covariate column."""
    x = np.asarray(x, dtype=float)
    g = np.asarray(g, dtype=float)
    ss = float(x @ x)
    if ss <= 0.0:
        return LearnerFit(learner_id, np.inf, np.zeros_like(g), 0.0)
    slope = float(x @ g) / ss
    inc = slope * x
    return LearnerFit(learner_id, float(np.sum((g - inc) ** 2)), inc, slope)


def difference_matrix(k, order):
    return np.diff(np.eye(k), n=order, axis=0)


def equidistant_knots(lo, hi, n_interior=20, degree=3):
    """Full knot vector: ``n_interior`` equidistant inner knots on [lo, hi]."""
    step = (hi - lo) / (n_interior + 1)
    return lo + step * np.arange(-degree, n_interior + 2 + degree)


def bspline_basis(x, knots, degree=3):
    x = np.clip(np.asarray(x, dtype=float), knots[degree], knots[-degree - 1])
    return BSpline.design_matrix(x, knots, degree).toarray()


def effective_df(gram, penalty, lam):
    return float(np.trace(np.linalg.solve(gram + lam * penalty, gram)))


def calibrate_lambda(gram, penalty, df, tol=1e-10, max_iter=200):
    """Ridge parameter giving trace of the hat matrix equal to ``df``.

    Bisection on log(lambda); the trace decreases monotonically from the
    basis dimension (lambda = 0) to the penalty null-space dimension.
    """
    lo, hi = -20.0, 30.0
    if effective_df(gram, penalty, np.exp(lo)) < df:
        return 0.0
    if effective_df(gram, penalty, np.exp(hi)) > df:
        raise ValueError(f"df={df} is below the penalty null-space dimension")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        d = effective_df(gram, penalty, np.exp(mid))
        if abs(d - df) < tol:
            break
        if d > df:
            lo = mid
        else:
            hi = mid
    return float(np.exp(mid))


class PSpline:
    """P-spline learner for one covariate, calibrated on training values."""

    def __init__(self, x, n_knots=20, degree=3, diff_order=2, df=4.0):
        x = np.asarray(x, dtype=float)
        self.degree = degree
        self.diff_order = diff_order
        self.df = df
        self.valid = np.unique(x).size >= 10
        lo, hi = (float(x.min()), float(x.max())) if x.size else (0.0, 1.0)
        if hi <= lo:
            hi = lo + 1.0
        self.knots = equidistant_knots(lo, hi, n_knots, degree)
        if not self.valid:
            self.lam = np.nan
            return
        B = bspline_basis(x, self.knots, degree)
        D = difference_matrix(B.shape[1], diff_order)
        gram = B.T @ B
        penalty = D.T @ D
        self.lam = calibrate_lambda(gram, penalty, df)
        self.B = B
        # coef = M @ g solves the penalised normal equations
        self.M = np.linalg.solve(gram + self.lam * penalty, B.T)

    def basis(self, x):
        return bspline_basis(x, self.knots, self.degree)

    def hat_trace(self):
        return float(np.trace(self.B @ self.M))

    def fit(self, g, learner_id=0):
        g = np.asarray(g, dtype=float)
        if not self.valid:
            return LearnerFit(learner_id, np.inf, np.zeros_like(g), np.zeros(len(self.knots) - self.degree - 1))
        coef = self.M @ g
        inc = self.B @ coef
        return LearnerFit(learner_id, float(np.sum((g - inc) ** 2)), inc, coef)


class LearnerPool:
    """Intercept plus per-covariate learners for one distribution parameter.

    ``X_train`` is used for fitting; ``extra`` holds further covariate
    matrices (e.g. the out-of-bag rows) that receive the same increments.
    """

    def __init__(self, covariates, X_train, kind="linear", extra=(), spline_opts=None):
        self.covariates = list(covariates)
        self.kind = kind
        X_train = np.asarray(X_train, dtype=float).reshape(-1, len(self.covariates))
        self.n = X_train.shape[0]
        self.names = ["(Intercept)"] + self.covariates
        self.extra = [np.asarray(E, dtype=float).reshape(-1, len(self.covariates)) for E in extra]
        if kind == "linear":
            self.center = X_train.mean(axis=0) if self.n else np.zeros(len(self.covariates))
            self.Xc = X_train - self.center
            self.ss = np.einsum("ij,ij->j", self.Xc, self.Xc)
            self.extra_c = [E - self.center for E in self.extra]
        elif kind == "pspline":
            opts = dict(spline_opts or {})
            self.splines = [PSpline(X_train[:, j], **opts) for j in range(len(self.covariates))]
            self.extra_B = [[s.basis(E[:, j]) for j, s in enumerate(self.splines)] for E in self.extra]
        else:
            raise ValueError(f"unknown learner kind {kind!r}")

    def __len__(self):
        return len(self.names)

    def rss_all(self, g):
        """RSS of every learner (intercept first) and the fitted coefficients."""
        g = np.asarray(g, dtype=float)
        gg = float(g @ g)
        rss0 = gg - g.sum() ** 2 / self.n
        if self.kind == "linear":
            xg = self.Xc.T @ g
            with np.errstate(divide="ignore", invalid="ignore"):
                slopes = np.where(self.ss > 0, xg / self.ss, 0.0)
                rss = np.where(self.ss > 0, gg - xg * slopes, np.inf)
            return np.concatenate(([rss0], rss)), slopes
        fits = [s.fit(g) for s in self.splines]
        return np.concatenate(([rss0], [f.rss for f in fits])), fits

    def best(self, g):
        """Best learner by RSS; ties within TIE_TOL go to the lowest id."""
        g = np.asarray(g, dtype=float)
        rss, aux = self.rss_all(g)
        lo = np.min(rss)
        j = int(np.flatnonzero(rss <= lo + TIE_TOL * max(1.0, abs(lo)))[0])
        if j == 0:
            return fit_intercept(g)
        if self.kind == "linear":
            slope = float(aux[j - 1])
            inc = slope * self.Xc[:, j - 1]
            return LearnerFit(j, float(rss[j]), inc, slope)
        f = aux[j - 1]
        return LearnerFit(j, f.rss, f.increment, f.coef)

    def increment(self, learner_id, coef, which=None):
        """Learner prediction on the training rows or on ``extra[which]``."""
        if learner_id == 0:
            n = self.n if which is None else self.extra[which].shape[0]
            return np.full(n, float(coef))
        j = learner_id - 1
        if self.kind == "linear":
            x = self.Xc[:, j] if which is None else self.extra_c[which][:, j]
            return float(coef) * x
        B = self.splines[j].B if which is None else self.extra_B[which][j]
        return B @ np.asarray(coef)

    def describe(self, learner_id):
        """JSON-ready description used to rebuild predictions."""
        if learner_id == 0:
            return {"kind": "intercept", "name": "(Intercept)"}
        j = learner_id - 1
        if self.kind == "linear":
            return {"kind": "linear", "name": self.covariates[j], "center": float(self.center[j])}
        s = self.splines[j]
        return {"kind": "pspline", "name": self.covariates[j], "knots": s.knots.tolist(),
                "degree": s.degree, "lambda": s.lam}


def evaluate_learner(desc, coef, x):
    """Contribution of an accumulated learner at covariate values ``x``."""
    kind = desc["kind"]
    if kind == "intercept":
        return np.full(len(x), float(coef))
    if kind == "linear":
        return float(coef) * (np.asarray(x, dtype=float) - desc["center"])
    B = bspline_basis(x, np.asarray(desc["knots"]), desc["degree"])
    return B @ np.asarray(coef, dtype=float)
