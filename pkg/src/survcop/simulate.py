"""Synthetic bivariate survival data with covariate-driven margins and dependence.

Built-in scenarios:

``scr``
    Weibull / log-logistic margins coupled by a Gumbel copula, a shared
    uniform censoring time on [0, 7] and semi-competing-risks observation
    rules (the second event is terminal).
``bte-linear``
    Weibull / log-logistic margins, Clayton copula, linear predictors and
    independent uniform censoring on [0, 8.5] per margin.  The scale
    intercepts of both margins are calibrated to the target censoring rate.
``bte-nonlinear``
    Same margins and copula with smooth non-linear effects; censoring on
    [0, 11] (mild) or [0, 2.75] (heavy).
``custom``
    User-specified families, linear coefficients and censoring bounds.

Event times are drawn by inverting the marginal survival functions at
copula-distributed survival levels.
"""
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Optional

import numpy as np
from scipy import special

from . import copulas, margins
from .copulas import CopulaFamily
from .data import BivariateSurvDataset
from .errors import ValidationError
from .likelihood import PARAMETERS
from .margins import MarginFamily

SCENARIOS = ("scr", "bte-linear", "bte-nonlinear", "custom")
CENSORING_TARGETS = {"mild": 0.30, "heavy": 0.70}
NONLINEAR_CENSORING = {"mild": 11.0, "heavy": 2.75}
CALIBRATION_SIZE = 200_000


def make_rng(seed):
    """Counter-based generator used throughout the simulations."""
    return np.random.Generator(np.random.Philox(int(seed)))


def gen_covariates(n, p, rho, rng):
    """Toeplitz-correlated Gaussians mapped to (0, 1) through the normal CDF."""
    if p < 1:
        raise ValidationError("p must be at least 1")
    if not abs(rho) < 1:
        raise ValidationError("|rho| must be below 1")
    eps = rng.standard_normal((n, p))
    z = np.empty((n, p))
    z[:, 0] = eps[:, 0]
    s = np.sqrt(1.0 - rho * rho)
    for j in range(1, p):
        z[:, j] = rho * z[:, j - 1] + s * eps[:, j]
    return special.ndtr(z)


# ----------------------------------------------------------------- scenarios

@dataclass
class Scenario:
    kind: str
    n: int = 1000
    p: int = 10
    rho: float = 0.5
    censoring: str = "mild"
    seed: int = 0
    # custom scenarios only
    margin1: str = "WEIBULL"
    margin2: str = "LOGLOGISTIC"
    copula: str = "CLAYTON"
    coefficients: Dict[str, Dict[str, float]] = field(default_factory=dict)
    censoring_bounds: Optional[tuple] = None
    scr: bool = False

    def __post_init__(self):
        self.kind = str(self.kind).lower()
        if self.kind not in SCENARIOS:
            raise ValidationError(f"unknown scenario {self.kind!r}; choose from {SCENARIOS}")
        if self.censoring not in CENSORING_TARGETS:
            raise ValidationError("censoring must be 'mild' or 'heavy'")
        if self.n < 1:
            raise ValidationError("n must be positive")
        need = {"scr": 4, "bte-linear": 4, "bte-nonlinear": 4}.get(self.kind, 1)
        if self.p < need:
            raise ValidationError(f"scenario {self.kind} needs p >= {need}")
        if self.kind == "custom":
            for prm, coefs in self.coefficients.items():
                if prm not in PARAMETERS:
                    raise ValidationError(f"unknown parameter {prm!r} in coefficients")
                for name in coefs:
                    if name != "(Intercept)" and _column(name, self.p) is None:
                        raise ValidationError(f"coefficient {name!r} does not name a covariate x1..x{self.p}")

    def families(self):
        if self.kind == "scr":
            return MarginFamily.WEIBULL, MarginFamily.LOGLOGISTIC, CopulaFamily.parse("gumbel")
        if self.kind.startswith("bte"):
            return MarginFamily.WEIBULL, MarginFamily.LOGLOGISTIC, CopulaFamily.parse("clayton")
        return (MarginFamily.parse(self.margin1), MarginFamily.parse(self.margin2),
                CopulaFamily.parse(self.copula))

    def is_scr(self):
        return self.kind == "scr" or (self.kind == "custom" and self.scr)

    def bounds(self):
        """Upper ends of the uniform censoring distributions (margin 1, margin 2)."""
        if self.kind == "scr":
            return 7.0, 7.0
        if self.kind == "bte-linear":
            return 8.5, 8.5
        if self.kind == "bte-nonlinear":
            b = NONLINEAR_CENSORING[self.censoring]
            return b, b
        if self.censoring_bounds is None:
            return np.inf, np.inf
        b1, b2 = self.censoring_bounds
        return float(b1), float(b2)

    def to_dict(self):
        d = {"kind": self.kind, "n": self.n, "p": self.p, "rho": self.rho, "seed": self.seed}
        if self.kind != "scr":
            d["censoring"] = self.censoring
        if self.kind == "custom":
            d.update(margin1=self.margin1, margin2=self.margin2, copula=self.copula,
                     coefficients=self.coefficients, scr=self.scr,
                     censoring_bounds=None if self.censoring_bounds is None else list(self.censoring_bounds))
        return d


def _column(name, p):
    if name.startswith("x") and name[1:].isdigit() and 1 <= int(name[1:]) <= p:
        return int(name[1:]) - 1
    return None


@lru_cache(maxsize=None)
def linear_intercepts(censoring):
    """Scale intercepts of the linear BTE scenario hitting the target censoring rate.

    Solved by bisection with common random numbers (a fixed calibration
    sample).  Marginal censoring does not depend on the copula, so the two
    margins are calibrated separately.
    """
    target = CENSORING_TARGETS[censoring]
    rng = make_rng(20240601)
    X = gen_covariates(CALIBRATION_SIZE, 4, 0.5, rng)
    u = rng.random((CALIBRATION_SIZE, 2))
    c = rng.random((CALIBRATION_SIZE, 2)) * 8.5
    base = _linear_predictors(X, 0.0, 0.0)

    def rate(margin, b0):
        if margin == 1:
            fam, e1, e2 = MarginFamily.WEIBULL, base[PARAMETERS[0]] + b0, base[PARAMETERS[1]]
        else:
            fam, e1, e2 = MarginFamily.LOGLOGISTIC, base[PARAMETERS[2]] + b0, base[PARAMETERS[3]]
        t = margins.quantile(fam, u[:, margin - 1], *margins.response(fam, e1, e2))
        return float(np.mean(c[:, margin - 1] < t))

    out = []
    for m in (1, 2):
        lo, hi = -10.0, 10.0  # rate increases with the scale intercept
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            if rate(m, mid) < target:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-10:
                break
        out.append(0.5 * (lo + hi))
    return tuple(out)


def _linear_predictors(X, b11, b21, b22=1.0):
    x1, x2, x4 = X[:, 0], X[:, 1], X[:, 3]
    return {
        PARAMETERS[0]: b11 - 2.0 * x1,
        PARAMETERS[1]: 1.0 * x2 + 1.5 * x4,
        PARAMETERS[2]: b21 + 1.0 * x1 + 1.5 * x2,
        PARAMETERS[3]: b22 + 0.75 * x2 + 0.75 * x4,
        PARAMETERS[4]: 3.0 - 2.0 * x2 - 2.0 * x4,
    }


def _nonlinear_predictors(X):
    x1, x2, x3, x4 = X[:, 0], X[:, 1], X[:, 2], X[:, 3]
    return {
        PARAMETERS[0]: -1.8 * np.cos(4.0 * x3),
        PARAMETERS[1]: 0.02 - np.sin(x1) + np.exp(x1 + 1.0) ** 2 + 3.0 * np.cos(2.0 * np.pi * x1),
        PARAMETERS[2]: 2.0 * np.sin(4.0 * x2),
        PARAMETERS[3]: -0.979 * np.cos(2.0 * x4) - 1.958 * np.tanh(x4),
        PARAMETERS[4]: -3.1 * np.cos(4.0 * x3),
    }


INFORMATIVE = {
    "linear": {PARAMETERS[0]: ["x1"], PARAMETERS[1]: ["x2", "x4"], PARAMETERS[2]: ["x1", "x2"],
               PARAMETERS[3]: ["x2", "x4"], PARAMETERS[4]: ["x2", "x4"]},
    "bte-nonlinear": {PARAMETERS[0]: ["x3"], PARAMETERS[1]: ["x1"], PARAMETERS[2]: ["x2"],
                      PARAMETERS[3]: ["x4"], PARAMETERS[4]: ["x3"]},
}


def scenario_constants(scenario):
    """Intercepts used by a scenario's predictor equations."""
    if scenario.kind == "scr":
        return {"beta0_margin1_theta1": 0.0, "beta0_margin2_theta1": 0.0, "beta0_margin2_theta2": 1.0}
    if scenario.kind == "bte-linear":
        b11, b21 = linear_intercepts(scenario.censoring)
        return {"beta0_margin1_theta1": b11, "beta0_margin2_theta1": b21, "beta0_margin2_theta2": 1.0}
    return {}


def predictors(scenario, X):
    """True predictors of all five parameters at covariates ``X``."""
    if scenario.kind in ("scr", "bte-linear"):
        c = scenario_constants(scenario)
        return _linear_predictors(X, c["beta0_margin1_theta1"], c["beta0_margin2_theta1"],
                                  c["beta0_margin2_theta2"])
    if scenario.kind == "bte-nonlinear":
        return _nonlinear_predictors(X)
    eta = {}
    for prm in PARAMETERS:
        coefs = scenario.coefficients.get(prm, {})
        e = np.full(X.shape[0], float(coefs.get("(Intercept)", 0.0)))
        for name, b in coefs.items():
            if name != "(Intercept)":
                e = e + float(b) * X[:, _column(name, scenario.p)]
        eta[prm] = e
    return eta


def informative_sets(scenario):
    if scenario.kind in ("scr", "bte-linear"):
        return {k: list(v) for k, v in INFORMATIVE["linear"].items()}
    if scenario.kind == "bte-nonlinear":
        return {k: list(v) for k, v in INFORMATIVE["bte-nonlinear"].items()}
    return {prm: sorted((n for n, b in scenario.coefficients.get(prm, {}).items()
                         if n != "(Intercept)" and b != 0), key=lambda s: int(s[1:]))
            for prm in PARAMETERS}


@dataclass
class TruthRecord:
    scenario: Scenario
    constants: Dict[str, float]
    informative: Dict[str, list]
    eta: Dict[str, np.ndarray]
    latent_time1: np.ndarray
    latent_time2: np.ndarray

    def families(self):
        return self.scenario.families()

    def survival(self, margin, times, rows=None):
        """True marginal survival matrix (n, len(times))."""
        m1, m2, _ = self.families()
        fam = m1 if margin == 1 else m2
        e1 = self.eta[PARAMETERS[2 * margin - 2]]
        e2 = self.eta[PARAMETERS[2 * margin - 1]]
        if rows is not None:
            e1, e2 = e1[rows], e2[rows]
        a, b = margins.response(fam, e1, e2)
        return margins.survival_curve(fam, times, a, b)

    def to_dict(self):
        return {
            "format": "survcop-truth/1",
            "scenario": self.scenario.to_dict(),
            "constants": self.constants,
            "informative": self.informative,
            "eta": {k: [float(x) for x in v] for k, v in self.eta.items()},
        }

    @classmethod
    def from_dict(cls, d):
        sc = d["scenario"]
        if sc.get("censoring_bounds") is not None:
            sc = dict(sc, censoring_bounds=tuple(sc["censoring_bounds"]))
        return cls(Scenario(**sc), dict(d["constants"]), {k: list(v) for k, v in d["informative"].items()},
                   {k: np.asarray(v, dtype=float) for k, v in d["eta"].items()},
                   np.array([]), np.array([]))


def gen_bivariate(scenario, rng=None):
    """Simulate a dataset and its truth record."""
    rng = make_rng(scenario.seed) if rng is None else rng
    n, p = scenario.n, scenario.p
    m1, m2, cop = scenario.families()
    X = gen_covariates(n, p, scenario.rho, rng)
    eta = predictors(scenario, X)
    if cop.n_params:
        theta_c = copulas.response(cop, eta[PARAMETERS[4]])
        u1, u2 = copulas.sample_pair(cop, theta_c, rng, size=n)
    else:
        u1, u2 = rng.random(n), rng.random(n)
        u1 = np.clip(u1, copulas.U_EPS, 1 - copulas.U_EPS)
        u2 = np.clip(u2, copulas.U_EPS, 1 - copulas.U_EPS)
    t1 = margins.quantile(m1, u1, *margins.response(m1, eta[PARAMETERS[0]], eta[PARAMETERS[1]]))
    t2 = margins.quantile(m2, u2, *margins.response(m2, eta[PARAMETERS[2]], eta[PARAMETERS[3]]))
    b1, b2 = scenario.bounds()
    if scenario.is_scr():
        c = (1.0 - rng.random(n)) * b1
        y1 = np.minimum(np.minimum(t1, t2), c)
        d1 = (t1 <= np.minimum(t2, c)).astype(int)
        y2 = np.minimum(t2, c)
        d2 = (t2 <= c).astype(int)
    else:
        c1 = (1.0 - rng.random(n)) * b1 if np.isfinite(b1) else np.full(n, np.inf)
        c2 = (1.0 - rng.random(n)) * b2 if np.isfinite(b2) else np.full(n, np.inf)
        y1, d1 = np.minimum(t1, c1), (t1 <= c1).astype(int)
        y2, d2 = np.minimum(t2, c2), (t2 <= c2).astype(int)
    names = [f"x{j + 1}" for j in range(p)]
    data = BivariateSurvDataset(y1, d1, y2, d2, X, names, scr=scenario.is_scr())
    truth = TruthRecord(scenario, scenario_constants(scenario), informative_sets(scenario), eta, t1, t2)
    return data, truth
