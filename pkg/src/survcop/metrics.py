"""Held-out evaluation: log-score, Brier scores, curve errors, concordance, selection."""
from dataclasses import asdict, dataclass, field
from typing import Dict, Optional

import numpy as np

from scipy.integrate import trapezoid

from .boost import predict
from .likelihood import PARAMETERS, bivariate_terms


def log_score(model, data):
    """Summed negative bivariate log-likelihood of ``data`` under ``model``."""
    if data.n == 0:
        raise ValueError("log-score needs a nonempty test set")
    pred = predict(model, data)
    s = pred.surface
    ll, _ = bivariate_terms(data.time1, data.status1, data.time2, data.status2,
                            s.margin1, s.margin2, s.copula, s.eta)
    return -float(np.sum(ll))


def default_grid(time, size=100, upper_quantile=0.95):
    """Equidistant grid from 0 to a high quantile of the observed times."""
    return np.linspace(0.0, float(np.quantile(time, upper_quantile)), size)


def censoring_km(time, status):
    """Kaplan-Meier estimate of the censoring survival G, as a step function.

    Returns ``(jump_times, G_after_jump)``; censorings (status 0) are the events.
    """
    time = np.asarray(time, dtype=float)
    cens = np.asarray(status) == 0
    ut, inv = np.unique(time, return_inverse=True)
    d = np.bincount(inv, weights=cens.astype(float))
    cnt = np.bincount(inv)
    at_risk = cnt[::-1].cumsum()[::-1]
    G = np.cumprod(1.0 - d / at_risk)
    return ut, G


def _step_eval(ut, G, t, left=False):
    """G(t) (right-continuous) or G(t-) when ``left``."""
    idx = np.searchsorted(ut, t, side="left" if left else "right") - 1
    out = np.ones(np.shape(t))
    ok = idx >= 0
    out[ok] = G[idx[ok]]
    return out


def brier_scores(S_hat, time, status, grid):
    """IPCW Brier score at every grid point (Graf-type weighting)."""
    time = np.asarray(time, dtype=float)
    status = np.asarray(status)
    grid = np.asarray(grid, dtype=float)
    S_hat = np.asarray(S_hat(grid) if callable(S_hat) else S_hat, dtype=float)
    if S_hat.shape != (time.size, grid.size):
        raise ValueError("predicted survival must have shape (n, len(grid))")
    ut, G = censoring_km(time, status)
    G_y = _step_eval(ut, G, time, left=True)
    G_t = _step_eval(ut, G, grid)
    died = (time[:, None] <= grid[None, :]) & (status[:, None] == 1)
    alive = time[:, None] > grid[None, :]
    if np.any(died.any(axis=1) & (G_y <= 0)) or np.any(alive.any(axis=0) & (G_t <= 0)):
        raise ValueError("censoring Kaplan-Meier estimate reaches zero inside the grid")
    with np.errstate(divide="ignore", invalid="ignore"):
        term_died = np.where(died, S_hat ** 2 / G_y[:, None], 0.0)
        term_alive = np.where(alive, (1.0 - S_hat) ** 2 / G_t[None, :], 0.0)
    return np.mean(term_died + term_alive, axis=0)


def ibs(S_hat, time, status, grid=None):
    """Integrated Brier score, normalised by the grid length."""
    status = np.asarray(status)
    if not np.any(status == 1):
        raise ValueError("all observations censored: Brier score undefined")
    grid = default_grid(time) if grid is None else np.asarray(grid, dtype=float)
    bs = brier_scores(S_hat, time, status, grid)
    span = grid[-1] - grid[0]
    if span <= 0:
        raise ValueError("grid must span a positive range")
    return float(trapezoid(bs, grid) / span)


def ise_iae(S_hat, S_true, grid):
    """Trapezoid integrals of squared and absolute curve errors, averaged over rows."""
    err = np.asarray(S_hat, dtype=float) - np.asarray(S_true, dtype=float)
    grid = np.asarray(grid, dtype=float)
    ise = trapezoid(err ** 2, grid, axis=-1)
    iae = trapezoid(np.abs(err), grid, axis=-1)
    return float(np.mean(ise)), float(np.mean(iae))


def c_index(risk, time, status, chunk=2048):
    """Harrell's concordance: higher risk should mean earlier observed events.

    Pairs with tied times are not comparable; tied risks count one half.
    """
    risk = np.asarray(risk, dtype=float)
    time = np.asarray(time, dtype=float)
    status = np.asarray(status)
    conc = 0.0
    comp = 0
    idx = np.flatnonzero(status == 1)
    for s in range(0, idx.size, chunk):
        i = idx[s:s + chunk]
        later = time[None, :] > time[i, None]
        comp += int(later.sum())
        gt = (risk[i, None] > risk[None, :]) & later
        eq = (risk[i, None] == risk[None, :]) & later
        conc += gt.sum() + 0.5 * eq.sum()
    if comp == 0:
        raise ValueError("no comparable pairs")
    return float(conc / comp)


def selection_rates(model, informative):
    """Per-parameter (tpr, fpr); None where the rate has an empty denominator."""
    sel = model.selected()
    out = {}
    for p in model.spec.active_parameters:
        cand = list(model.spec.formulas[p].covariates)
        inf = [c for c in informative.get(p, []) if c in cand]
        noise = [c for c in cand if c not in inf]
        chosen = set(sel.get(p, []))
        tpr = len(chosen & set(inf)) / len(inf) if inf else None
        fpr = len(chosen & set(noise)) / len(noise) if noise else None
        out[p] = {"tpr": tpr, "fpr": fpr}
    return out


@dataclass
class MarginReport:
    ibs: float
    c_index: float
    ise: Optional[float] = None
    iae: Optional[float] = None


@dataclass
class EvaluationReport:
    log_score: float
    n: int
    margins: Dict[str, MarginReport]
    selection: Dict[str, dict] = field(default_factory=dict)
    kendall_tau_mean: Optional[float] = None

    def to_dict(self):
        return asdict(self)


def evaluate(model, data, truth=None, grid_size=100):
    """Full report; curve errors and selection rates need the truth record."""
    pred = predict(model, data)
    reports = {}
    for j, (y, d) in enumerate(((data.time1, data.status1), (data.time2, data.status2)), start=1):
        grid = default_grid(y, grid_size)
        S = pred.survival(j, grid)
        rep = MarginReport(ibs(S, y, d, grid), c_index(-pred.median(j), y, d))
        if truth is not None:
            if len(truth.eta[PARAMETERS[0]]) != data.n:
                raise ValueError("truth record does not match the evaluated data")
            rep.ise, rep.iae = ise_iae(S, truth.survival(j, grid), grid)
        reports[f"margin{j}"] = rep
    tau = pred.kendall_tau()
    report = EvaluationReport(log_score(model, data), data.n, reports,
                              kendall_tau_mean=float(np.mean(tau)))
    if truth is not None:
        report.selection = selection_rates(model, truth.informative)
    return report
