"""Two-stage, non-cyclic, component-wise gradient boosting.

Stage 1 boosts the marginal distributions on their univariate censored
log-likelihoods.  Stage 2 plugs the fitted margins into the bivariate
likelihood and boosts the remaining predictors:

* ``bte``: margins 1 and 2 are boosted separately; stage 2 boosts only the
  dependence parameter.
* ``scr``: only the terminal margin (2) is boosted in stage 1; stage 2
  boosts both parameters of margin 1 jointly with the dependence parameter.

Within a stage each iteration fits every candidate learner of every
parameter to the (stabilised) negative gradient, keeps the best learner
per parameter by RSS, and updates only the parameter whose trial update
yields the lowest training risk.
"""
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import optimize

from . import copulas, margins
from .copulas import CopulaFamily, CopulaKind
from .data import BivariateSurvDataset
from .errors import ConvergenceError, NonFiniteError, ValidationError
from .learners import LearnerPool, evaluate_learner
from .likelihood import PARAMETERS, ParameterSurface, bivariate_terms, univariate_terms
from .margins import MarginFamily

MODES = ("bte", "scr")
STABILIZATIONS = ("none", "l2", "mad")
LEARNER_KINDS = ("linear", "pspline")
STAGE_PARAMETERS = {
    "margin1": PARAMETERS[0:2],
    "margin2": PARAMETERS[2:4],
    "copula": PARAMETERS[4:5],
    "joint": PARAMETERS[0:2] + PARAMETERS[4:5],
}
GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


class StageWarning(UserWarning):
    """Early stopping hit the iteration budget or a parameter was clamped."""


# -------------------------------------------------------------- specification

@dataclass(frozen=True)
class Formula:
    covariates: Tuple[str, ...]
    learner: str = "linear"

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))
        if self.learner not in LEARNER_KINDS:
            raise ValidationError(f"unknown learner kind {self.learner!r}")


@dataclass
class ModelSpec:
    margin1: MarginFamily
    margin2: MarginFamily
    copula: CopulaFamily
    formulas: Dict[str, Formula]
    mode: str = "bte"

    def __post_init__(self):
        self.margin1 = MarginFamily.parse(self.margin1)
        self.margin2 = MarginFamily.parse(self.margin2)
        self.copula = CopulaFamily.parse(self.copula)
        self.mode = str(self.mode).lower()
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}")
        missing = [p for p in self.active_parameters if p not in self.formulas]
        if missing:
            raise ValidationError(f"no formula for {missing}")

    @classmethod
    def build(cls, margin1, margin2, copula, covariates, mode="bte", learner="linear", formulas=None):
        """Spec in which every parameter sees ``covariates`` unless overridden."""
        forms = {p: Formula(tuple(covariates), learner) for p in PARAMETERS}
        for p, f in (formulas or {}).items():
            forms[p] = f if isinstance(f, Formula) else Formula(**f)
        return cls(margin1, margin2, copula, forms, mode)

    @property
    def active_parameters(self):
        return PARAMETERS if self.copula.n_params else PARAMETERS[:4]

    def check_schema(self, names):
        known = set(names)
        for p in self.active_parameters:
            bad = [c for c in self.formulas[p].covariates if c not in known]
            if bad:
                raise ValidationError(f"formula for {p} references unknown covariates {bad}")

    def to_dict(self):
        return {
            "margin1": self.margin1.value, "margin2": self.margin2.value,
            "copula": self.copula.token, "mode": self.mode,
            "formulas": {p: {"covariates": list(f.covariates), "learner": f.learner}
                         for p, f in self.formulas.items() if p in self.active_parameters},
        }

    @classmethod
    def from_dict(cls, d):
        forms = {p: Formula(tuple(f["covariates"]), f["learner"]) for p, f in d["formulas"].items()}
        return cls(d["margin1"], d["margin2"], d["copula"], forms, d["mode"])


@dataclass
class BoostConfig:
    """Tuning constants.

    ``oob_weights`` follows the usual boosting convention: 1 marks a training
    row, 0 an out-of-bag row used only to trace the early-stopping risk.
    ``patience`` (optional) ends a stage once the out-of-bag risk has not
    improved for that many iterations; the selected iteration is unchanged
    whenever the risk curve has no later, lower minimum.
    """

    step_length: float = 0.1
    mstop: Dict[str, int] = field(default_factory=lambda: {"margin1": 1000, "margin2": 1000, "copula": 1000})
    stabilization: str = "l2"
    oob_weights: Optional[np.ndarray] = None
    seed: int = 0
    early_stopping: bool = True
    patience: Optional[int] = None
    spline: Dict[str, float] = field(default_factory=lambda: {"n_knots": 20, "degree": 3, "diff_order": 2, "df": 4.0})

    def __post_init__(self):
        if not 0.0 < self.step_length < 1.0:
            raise ValidationError("step_length must lie in (0, 1)")
        self.stabilization = str(self.stabilization).lower()
        if self.stabilization not in STABILIZATIONS:
            raise ValidationError(f"stabilization must be one of {STABILIZATIONS}")
        for k, v in self.mstop.items():
            if k not in STAGE_PARAMETERS:
                raise ValidationError(f"unknown stage {k!r} in mstop")
            if int(v) < 0:
                raise ValidationError("mstop budgets must be non-negative")
        if self.patience is not None and self.patience < 1:
            raise ValidationError("patience must be positive")

    def budget(self, stage):
        if stage in self.mstop:
            return int(self.mstop[stage])
        if stage == "joint":
            return int(self.mstop.get("margin1", 1000)) + int(self.mstop.get("copula", 1000))
        return 1000

    def split(self, n):
        """Boolean masks (train, oob) for ``n`` rows."""
        if self.oob_weights is None:
            return np.ones(n, bool), np.zeros(n, bool)
        w = np.asarray(self.oob_weights)
        if w.shape != (n,) or np.any((w != 0) & (w != 1)):
            raise ValidationError("oob_weights must be a 0/1 array with one entry per row")
        train = w == 1
        if not train.any():
            raise ValidationError("oob_weights select no training rows")
        if self.early_stopping and train.all():
            raise ValidationError("early stopping requires out-of-bag rows (weight 0)")
        return train, ~train


# ----------------------------------------------------------------- primitives

def stabilize(g, mode="l2"):
    g = np.asarray(g, dtype=float)
    mode = str(mode).lower()
    if mode == "none":
        return g
    if mode == "l2":
        d = np.sqrt(np.mean(g * g))
    elif mode == "mad":
        d = np.median(np.abs(g - np.median(g)))
    else:
        raise ValidationError(f"unknown stabilization {mode!r}")
    return g / d if d > 0 and np.isfinite(d) else g


def select_mstop(curve):
    """Index of the minimum; the first one on ties (index 0 = offsets only)."""
    curve = np.asarray(curve, dtype=float)
    if curve.size == 0:
        raise ValueError("empty risk curve")
    return int(np.argmin(curve))


def golden_section(f, lo, hi, tol=1e-8, max_iter=500):
    """Minimise a unimodal scalar function on [lo, hi]."""
    a, b = lo, hi
    c, d = b - GOLDEN * (b - a), a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    else:
        raise ConvergenceError("golden-section search did not converge")
    return 0.5 * (a + b)


# ---------------------------------------------------------------- loss views

class _Partition:
    """Responses of one row subset, sliced once."""

    def __init__(self, data, mask):
        self.y1, self.d1 = data.time1[mask], data.status1[mask]
        self.y2, self.d2 = data.time2[mask], data.status2[mask]
        self.n = int(mask.sum())


class UnivariateLoss:
    """Censored univariate negative log-likelihood of margin ``j``."""

    def __init__(self, family, j):
        self.family = MarginFamily.parse(family)
        self.j = j
        self.names = STAGE_PARAMETERS[f"margin{j}"]

    def _yd(self, part):
        return (part.y1, part.d1) if self.j == 1 else (part.y2, part.d2)

    def terms(self, part, eta, want=()):
        y, d = self._yd(part)
        ll, g1, g2 = univariate_terms(y, d, self.family, eta[self.names[0]], eta[self.names[1]])
        return ll, {self.names[0]: g1, self.names[1]: g2}

    def risk(self, part, eta):
        y, d = self._yd(part)
        ll, _, _ = univariate_terms(y, d, self.family, eta[self.names[0]], eta[self.names[1]])
        return -float(np.mean(ll))


class BivariateLoss:
    """Censored bivariate negative log-likelihood."""

    def __init__(self, margin1, margin2, copula):
        self.margin1, self.margin2, self.copula = margin1, margin2, copula

    def terms(self, part, eta, want=()):
        return bivariate_terms(part.y1, part.d1, part.y2, part.d2, self.margin1, self.margin2,
                               self.copula, eta, want=tuple(want), check=False)

    def risk(self, part, eta):
        ll, _ = self.terms(part, eta)
        return -float(np.mean(ll))


# ----------------------------------------------------------------- offsets

def _nm_start(family, y):
    ly = np.log(y)
    sd = max(float(np.std(ly)), 1e-3)
    if family is MarginFamily.LOGNORMAL:
        return np.array([float(np.mean(ly)), np.log(sd)])
    scale = np.pi / np.sqrt(6.0 if family is MarginFamily.WEIBULL else 3.0)
    return np.array([float(np.mean(ly)), np.log(scale / sd)])


def margin_offsets(family, y, delta):
    """Intercept-only MLE (eta1, eta2) of a censored margin (Nelder-Mead)."""
    family = MarginFamily.parse(family)
    y = np.asarray(y, dtype=float)
    delta = np.asarray(delta)
    if y.size == 0:
        raise ValidationError("offsets need a nonempty training subset")

    def nll(v):
        ll, _, _ = univariate_terms(y, delta, family, np.full(y.size, v[0]), np.full(y.size, v[1]))
        r = -float(np.mean(ll))
        return r if np.isfinite(r) else np.inf

    res = optimize.minimize(nll, _nm_start(family, y), method="Nelder-Mead",
                            options={"xatol": 1e-8, "fatol": 1e-8, "maxiter": 5000, "maxfev": 10000})
    if not res.success:
        raise ConvergenceError(f"offset optimisation for {family.value} failed: {res.message}")
    return float(res.x[0]), float(res.x[1])


def _copula_bounds(fam):
    if fam.kind is CopulaKind.GAUSSIAN:
        return -5.0, 5.0
    if fam.kind is CopulaKind.FRANK:
        return -45.0, 45.0
    return -12.0, 5.0


def copula_offset(loss, part, eta):
    """Constant copula predictor maximising the bivariate likelihood.

    A coarse grid brackets the optimum before golden-section refinement.
    """
    fam = loss.copula
    if fam.n_params == 0:
        return 0.0
    name = PARAMETERS[4]

    def risk(v):
        e = dict(eta)
        e[name] = np.full(part.n, v)
        r = loss.risk(part, e)
        return r if np.isfinite(r) else np.inf

    lo, hi = _copula_bounds(fam)
    grid = np.linspace(lo, hi, 69)
    vals = np.array([risk(v) for v in grid])
    if not np.isfinite(vals).any():
        raise NonFiniteError("copula offset: risk non-finite on the whole search grid", np.array([], int))
    k = int(np.argmin(vals))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    return float(golden_section(risk, a, b))


def offsets(dataset, spec, train=None):
    """Intercept-only starting values of the five predictors on training rows.

    The copula offset is computed with both margins at their offsets; during
    :func:`fit` it is recomputed with the margins frozen at their boosted fit.
    """
    train = np.ones(dataset.n, bool) if train is None else np.asarray(train, bool)
    part = _Partition(dataset, train)
    out = {}
    out[PARAMETERS[0]], out[PARAMETERS[1]] = margin_offsets(spec.margin1, part.y1, part.d1)
    out[PARAMETERS[2]], out[PARAMETERS[3]] = margin_offsets(spec.margin2, part.y2, part.d2)
    eta = {p: np.full(part.n, v) for p, v in out.items()}
    eta[PARAMETERS[4]] = np.zeros(part.n)
    out[PARAMETERS[4]] = copula_offset(BivariateLoss(spec.margin1, spec.margin2, spec.copula), part, eta)
    return out


# ------------------------------------------------------------------- stages

@dataclass
class HistoryEntry:
    iteration: int
    parameter: str
    learner_id: int
    coef: object
    loss_reduction: float
    reductions: Dict[str, float]


@dataclass
class StageResult:
    name: str
    parameters: Tuple[str, ...]
    history: List[HistoryEntry]
    train_risk: List[float]
    oob_risk: Optional[List[float]]
    mstop: int
    budget: int

    def to_dict(self):
        return {
            "name": self.name, "parameters": list(self.parameters), "mstop": self.mstop,
            "budget": self.budget, "train_risk": self.train_risk, "oob_risk": self.oob_risk,
            "history": [[h.iteration, h.parameter, h.learner_id, _jsonable(h.coef), h.loss_reduction,
                         h.reductions] for h in self.history],
        }

    @classmethod
    def from_dict(cls, d):
        hist = [HistoryEntry(it, p, lid, coef if not isinstance(coef, list) else np.asarray(coef), red, reds)
                for it, p, lid, coef, red, reds in d["history"]]
        return cls(d["name"], tuple(d["parameters"]), hist, d["train_risk"], d["oob_risk"],
                   d["mstop"], d["budget"])


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return [float(x) for x in v]
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def boost_stage(name, loss, pools, eta_train, eta_oob, parts, config, budget=None):
    """Run one boosting stage in place on ``eta_train`` / ``eta_oob``.

    ``pools`` maps each parameter in scope to its :class:`LearnerPool`
    (whose ``extra[0]`` rows are the out-of-bag rows).  The predictors are
    left at the final iteration; use :func:`replay` to rewind to ``mstop``.
    """
    params = tuple(pools)
    train_part, oob_part = parts
    budget = config.budget(name) if budget is None else budget
    step = config.step_length
    has_oob = oob_part is not None and oob_part.n > 0
    risk = loss.risk(train_part, eta_train)
    train_path = [risk]
    oob_path = [loss.risk(oob_part, eta_oob)] if has_oob else None
    best_oob, since_best = (oob_path[0] if has_oob else None), 0
    history = []
    frank = PARAMETERS[4] in params and loss.copula.kind is CopulaKind.FRANK if isinstance(loss, BivariateLoss) else False
    for m in range(1, budget + 1):
        _, grads = loss.terms(train_part, eta_train, want=params)
        bad = [p for p in params if not np.all(np.isfinite(grads[p]))]
        if bad:
            idx = np.flatnonzero(~np.isfinite(grads[bad[0]]))
            raise NonFiniteError(f"stage {name}, iteration {m}: non-finite gradient for {bad[0]}", idx)
        chosen, chosen_risk, reductions = None, np.inf, {}
        for p in params:
            fit_ = pools[p].best(stabilize(grads[p], config.stabilization))
            trial = dict(eta_train)
            trial[p] = eta_train[p] + step * fit_.increment
            r = loss.risk(train_part, trial)
            # a step into a numerically unusable region is not a candidate
            if not np.isfinite(r):
                r = np.inf
            reductions[p] = risk - r
            if r < chosen_risk:
                chosen, chosen_risk = (p, fit_), r
        if chosen is None:
            raise NonFiniteError(f"stage {name}, iteration {m}: every candidate update gives a "
                                 "non-finite risk", np.array([], int))
        p, fit_ = chosen
        old = eta_train[p]
        eta_train[p] = old + step * fit_.increment
        if has_oob:
            eta_oob[p] = eta_oob[p] + step * pools[p].increment(fit_.learner_id, fit_.coef, which=0)
        if frank and p == PARAMETERS[4] and np.any(np.sign(old) * np.sign(eta_train[p]) < 0):
            warnings.warn(f"stage {name}, iteration {m}: Frank parameter crossed 0 and is clamped "
                          f"to +-{copulas.FRANK_MIN_ABS}", StageWarning, stacklevel=2)
        history.append(HistoryEntry(m, p, fit_.learner_id, _jsonable(fit_.coef), risk - chosen_risk, reductions))
        risk = chosen_risk
        train_path.append(risk)
        if has_oob:
            r_oob = loss.risk(oob_part, eta_oob)
            if not np.isfinite(r_oob):
                # the path cannot be scored beyond this point; mstop comes from the finite part
                warnings.warn(f"stage {name}, iteration {m}: non-finite out-of-bag risk; "
                              "stopping the stage", StageWarning, stacklevel=2)
                break
            oob_path.append(r_oob)
            if r_oob < best_oob:
                best_oob, since_best = r_oob, 0
            else:
                since_best += 1
                if config.patience is not None and since_best >= config.patience:
                    break
    if has_oob and config.early_stopping:
        mstop = select_mstop(oob_path)
        if mstop == budget and budget > 0:
            warnings.warn(f"stage {name}: out-of-bag risk still decreasing at the budget ({budget}); "
                          "using the last iteration", StageWarning, stacklevel=2)
    else:
        mstop = len(history)
    return StageResult(name, params, history, train_path, oob_path, mstop, budget)


def replay(stage, pools, eta, step, which=None, upto=None):
    """Apply the first ``upto`` (default mstop) updates of a stage to ``eta`` in place."""
    upto = stage.mstop if upto is None else upto
    for h in stage.history[:upto]:
        eta[h.parameter] = eta[h.parameter] + step * pools[h.parameter].increment(h.learner_id, h.coef, which=which)
    return eta


# ----------------------------------------------------------------- the model

@dataclass
class FittedModel:
    spec: ModelSpec
    step_length: float
    offsets: Dict[str, float]
    learners: Dict[str, List[dict]]
    stages: List[StageResult]
    covariate_names: List[str]

    def stage_for(self, param):
        for s in self.stages:
            if param in s.parameters:
                return s
        return None

    def coefficients(self):
        """Accumulated learner coefficients at each stage's mstop.

        Returns ``{param: {learner_id: coef}}`` including only learners that
        were updated at least once before mstop.
        """
        out = {p: {} for p in self.spec.active_parameters}
        for s in self.stages:
            for h in s.history[:s.mstop]:
                inc = self.step_length * (np.asarray(h.coef, dtype=float) if isinstance(h.coef, (list, np.ndarray))
                                          else float(h.coef))
                acc = out[h.parameter]
                acc[h.learner_id] = acc[h.learner_id] + inc if h.learner_id in acc else inc
        return out

    def selected(self):
        """Covariates with a nonzero accumulated coefficient, per parameter."""
        sel = {}
        for p, acc in self.coefficients().items():
            names = []
            for lid, c in sorted(acc.items()):
                if lid == 0:
                    continue
                if np.any(np.asarray(c) != 0.0):
                    names.append(self.learners[p][lid]["name"])
            sel[p] = names
        return sel

    def linear_coefficients(self):
        """Intercept and slopes on the original covariate scale (linear learners only)."""
        out = {}
        for p, acc in self.coefficients().items():
            row = {"(Intercept)": self.offsets[p] + float(acc.get(0, 0.0))}
            for lid, c in acc.items():
                d = self.learners[p][lid]
                if d["kind"] == "linear":
                    row[d["name"]] = float(c)
                    row["(Intercept)"] -= float(c) * d["center"]
            out[p] = row
        return out

    def mstops(self):
        return {s.name: s.mstop for s in self.stages}

    def predict_eta(self, X, names):
        """Predictors at new covariate rows (columns matched by name)."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        pos = {c: j for j, c in enumerate(names)}
        needed = sorted({c for p in self.spec.active_parameters for c in self.spec.formulas[p].covariates})
        missing = [c for c in needed if c not in pos]
        if missing:
            raise ValidationError(f"covariates {missing} required by the model are missing")
        n = X.shape[0]
        eta = {p: np.full(n, float(self.offsets.get(p, 0.0))) for p in PARAMETERS}
        for p, acc in self.coefficients().items():
            for lid, c in sorted(acc.items()):
                d = self.learners[p][lid]
                x = np.zeros(n) if lid == 0 else X[:, pos[d["name"]]]
                eta[p] = eta[p] + evaluate_learner(d, c, x)
        return eta

    def to_dict(self):
        return {
            "format": "survcop-model/1",
            "spec": self.spec.to_dict(),
            "step_length": self.step_length,
            "offsets": {p: float(v) for p, v in self.offsets.items()},
            "learners": self.learners,
            "stages": [s.to_dict() for s in self.stages],
            "covariate_names": list(self.covariate_names),
            "coefficients": {p: {str(k): _jsonable(v) for k, v in sorted(acc.items())}
                             for p, acc in self.coefficients().items()},
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != "survcop-model/1":
            raise ValidationError("not a survcop model file")
        stages = [StageResult.from_dict(s) for s in d["stages"]]
        return cls(ModelSpec.from_dict(d["spec"]), float(d["step_length"]), dict(d["offsets"]),
                   {p: list(v) for p, v in d["learners"].items()}, stages, list(d["covariate_names"]))


# --------------------------------------------------------------------- fit

def _pools(dataset, spec, config, params, train, oob):
    pools = {}
    for p in params:
        f = spec.formulas[p]
        X = dataset.columns(f.covariates) if f.covariates else np.zeros((dataset.n, 0))
        pools[p] = LearnerPool(f.covariates, X[train], f.learner, extra=(X[oob],),
                               spline_opts=config.spline)
    return pools


def _run(name, loss, pools, eta_tr, eta_oob, parts, config):
    stage = boost_stage(name, loss, pools, dict(eta_tr), dict(eta_oob), parts, config)
    # rewind to mstop from the stage's starting predictors
    replay(stage, pools, eta_tr, config.step_length)
    if parts[1].n:
        replay(stage, pools, eta_oob, config.step_length, which=0)
    return stage


def _reusable(warm, spec, config):
    if warm is None:
        return False
    ws = warm.spec
    same = (ws.mode == spec.mode and ws.margin1 == spec.margin1 and ws.margin2 == spec.margin2
            and warm.step_length == config.step_length
            and all(ws.formulas[p] == spec.formulas[p] for p in PARAMETERS[:4]))
    if not same:
        raise ValidationError("warm-start model differs in margins, formulas or step length")
    return True


def fit(dataset, spec, config=None, warm=None):
    """Fit a boosted distributional copula model; see the module docstring.

    ``warm`` may hold a model fitted on the same data, split and margin
    formulas; its margin stages are then reused instead of being re-boosted
    (the result is identical because boosting is deterministic).
    """
    config = config or BoostConfig()
    if not isinstance(dataset, BivariateSurvDataset):
        raise ValidationError("dataset must be a BivariateSurvDataset")
    spec.check_schema(dataset.covariate_names)
    if spec.mode == "scr":
        if not dataset.scr:
            raise ValidationError("SCR mode requires data flagged as semi-competing risks")
        dataset.check_scr()
    train, oob = config.split(dataset.n)
    parts = (_Partition(dataset, train), _Partition(dataset, oob))
    ntr, noob = parts[0].n, parts[1].n

    reuse = _reusable(warm, spec, config)
    offs = {}
    if reuse:
        offs.update({p: warm.offsets[p] for p in PARAMETERS[:4]})
    else:
        offs[PARAMETERS[0]], offs[PARAMETERS[1]] = margin_offsets(spec.margin1, parts[0].y1, parts[0].d1)
        offs[PARAMETERS[2]], offs[PARAMETERS[3]] = margin_offsets(spec.margin2, parts[0].y2, parts[0].d2)
    offs[PARAMETERS[4]] = 0.0
    eta_tr = {p: np.full(ntr, v) for p, v in offs.items()}
    eta_oob = {p: np.full(noob, v) for p, v in offs.items()}

    active = spec.active_parameters
    pools = _pools(dataset, spec, config, active, train, oob)
    stages = []
    sub = lambda names: {p: pools[p] for p in names if p in active}

    margin_stages = ("margin1", "margin2") if spec.mode == "bte" else ("margin2",)
    for j, name in enumerate(margin_stages):
        if reuse:
            stage = next(s for s in warm.stages if s.name == name)
            replay(stage, pools, eta_tr, config.step_length)
            if noob:
                replay(stage, pools, eta_oob, config.step_length, which=0)
        else:
            m = 1 if name == "margin1" else 2
            fam = spec.margin1 if m == 1 else spec.margin2
            stage = _run(name, UnivariateLoss(fam, m), sub(STAGE_PARAMETERS[name]), eta_tr, eta_oob, parts, config)
        stages.append(stage)

    biv = BivariateLoss(spec.margin1, spec.margin2, spec.copula)
    if spec.copula.n_params:
        offs[PARAMETERS[4]] = copula_offset(biv, parts[0], eta_tr)
        eta_tr[PARAMETERS[4]] = np.full(ntr, offs[PARAMETERS[4]])
        eta_oob[PARAMETERS[4]] = np.full(noob, offs[PARAMETERS[4]])
    if spec.mode == "bte":
        if spec.copula.n_params:
            stages.append(_run("copula", biv, sub(STAGE_PARAMETERS["copula"]), eta_tr, eta_oob, parts, config))
    else:
        stages.append(_run("joint", biv, sub(STAGE_PARAMETERS["joint"]), eta_tr, eta_oob, parts, config))

    learners = {p: [pools[p].describe(i) for i in range(len(pools[p]))] for p in active}
    return FittedModel(spec, config.step_length, offs, learners, stages, list(dataset.covariate_names))


# ----------------------------------------------------------------- predict

@dataclass
class Prediction:
    """Per-observation predicted distribution and derived dependence summaries."""

    surface: ParameterSurface

    @property
    def theta(self):
        return self.surface.theta()

    def survival(self, margin, times):
        """Matrix (n, len(times)) of marginal survival probabilities."""
        fam = self.surface.margin1 if margin == 1 else self.surface.margin2
        th = self.theta
        t1, t2 = (th[PARAMETERS[0]], th[PARAMETERS[1]]) if margin == 1 else (th[PARAMETERS[2]], th[PARAMETERS[3]])
        return margins.survival_curve(fam, times, t1, t2)

    def median(self, margin):
        fam = self.surface.margin1 if margin == 1 else self.surface.margin2
        th = self.theta
        t1, t2 = (th[PARAMETERS[0]], th[PARAMETERS[1]]) if margin == 1 else (th[PARAMETERS[2]], th[PARAMETERS[3]])
        return margins.median(fam, t1, t2)

    def joint_survival(self, t1, t2):
        """S(t1, t2) = C(S1(t1), S2(t2)) per observation (scalar or per-row times)."""
        n = len(self.surface.eta[PARAMETERS[0]])
        s1 = self._surv_at(1, t1, n)
        s2 = self._surv_at(2, t2, n)
        cop = self.surface.copula
        if cop.n_params == 0:
            return s1 * s2
        return copulas.cdf(cop, s1, s2, self.theta[PARAMETERS[4]])

    def _surv_at(self, margin, t, n):
        fam = self.surface.margin1 if margin == 1 else self.surface.margin2
        th = self.theta
        a, b = (th[PARAMETERS[0]], th[PARAMETERS[1]]) if margin == 1 else (th[PARAMETERS[2]], th[PARAMETERS[3]])
        t = np.broadcast_to(np.asarray(t, dtype=float), (n,))
        return margins.survival(fam, t, a, b)

    def kendall_tau(self):
        cop = self.surface.copula
        n = len(self.surface.eta[PARAMETERS[0]])
        if cop.n_params == 0:
            return np.zeros(n)
        return copulas.kendall_tau(cop, self.theta[PARAMETERS[4]])

    def tail_dependence(self):
        cop = self.surface.copula
        n = len(self.surface.eta[PARAMETERS[0]])
        if cop.n_params == 0:
            return np.zeros(n), np.zeros(n)
        lo, up = copulas.tail_dependence(cop, self.theta[PARAMETERS[4]])
        return np.broadcast_to(lo, (n,)).astype(float), np.broadcast_to(up, (n,)).astype(float)

    def cross_ratio(self, u1=0.5, u2=0.5):
        """Local dependence at the given survival levels (default: both medians)."""
        cop = self.surface.copula
        n = len(self.surface.eta[PARAMETERS[0]])
        if cop.n_params == 0:
            return np.ones(n)
        return copulas.cross_ratio(cop, np.full(n, u1), np.full(n, u2), self.theta[PARAMETERS[4]])


def predict(model, X, names=None):
    """Predicted distribution for new covariates (a dataset or a matrix plus names)."""
    if isinstance(X, BivariateSurvDataset):
        names, X = X.covariate_names, X.X
    if names is None:
        names = model.covariate_names
    eta = model.predict_eta(X, names)
    sp = model.spec
    return Prediction(ParameterSurface(sp.margin1, sp.margin2, sp.copula, eta))
