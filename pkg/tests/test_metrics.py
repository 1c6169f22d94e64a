import dataclasses
import itertools
import warnings
from types import SimpleNamespace

import numpy as np
import pytest

from survcop import boost as B
from survcop import margins as Mg
from survcop import metrics as M
from survcop.data import BivariateSurvDataset
from survcop.likelihood import PARAMETERS as P
from survcop.margins import MarginFamily as F
from survcop.simulate import Scenario, gen_bivariate


def _oob(n, seed=0):
    w = np.ones(n, int)
    w[np.random.default_rng(seed).permutation(n)[: n // 4]] = 0
    return w


@pytest.fixture(scope="module")
def linear_fit():
    train, _ = gen_bivariate(Scenario("bte-linear", n=2000, p=6, seed=21))
    test, truth = gen_bivariate(Scenario("bte-linear", n=10_000, p=6, seed=22))
    spec = B.ModelSpec.build("weibull", "loglogistic", "clayton", train.covariate_names)
    cfg = B.BoostConfig(oob_weights=_oob(train.n), mstop={"margin1": 600, "margin2": 600, "copula": 600})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", B.StageWarning)
        model = B.fit(train, spec, cfg)
    return model, test, truth


# ------------------------------------------------------------------ Brier

def test_constant_half_predictor():
    t = np.random.default_rng(0).exponential(size=300)
    d = np.ones(300, int)
    grid = M.default_grid(t)
    S = np.full((300, grid.size), 0.5)
    np.testing.assert_allclose(M.brier_scores(S, t, d, grid), 0.25, atol=1e-15)
    assert M.ibs(S, t, d, grid) == pytest.approx(0.25, abs=1e-15)


def test_oracle_step_predictor_beats_constant():
    t = np.random.default_rng(1).exponential(size=400)
    d = np.ones(400, int)
    grid = M.default_grid(t)
    oracle = (t[:, None] > grid[None, :]).astype(float)
    assert M.ibs(oracle, t, d, grid) < M.ibs(np.full_like(oracle, 0.5), t, d, grid)
    assert M.ibs(oracle, t, d, grid) == pytest.approx(0.0, abs=1e-15)


def test_brier_matches_direct_ipcw_oracle():
    rng = np.random.default_rng(2)
    n = 60
    t = np.round(rng.exponential(size=n), 2) + 0.01
    d = rng.integers(0, 2, n)
    grid = np.linspace(0.0, np.quantile(t, 0.8), 15)
    S = rng.uniform(size=(n, grid.size))

    # censoring KM by the product-limit definition, left limit handled by strict inequality
    def G(s, strict):
        out = 1.0
        for u in np.unique(t):
            if u < s or (u == s and not strict):
                out *= 1 - np.sum((t == u) & (d == 0)) / np.sum(t >= u)
        return out

    expect = []
    for k, s in enumerate(grid):
        acc = 0.0
        for i in range(n):
            if t[i] <= s and d[i] == 1:
                acc += S[i, k] ** 2 / G(t[i], strict=True)
            elif t[i] > s:
                acc += (1 - S[i, k]) ** 2 / G(s, strict=False)
        expect.append(acc / n)
    np.testing.assert_allclose(M.brier_scores(S, t, d, grid), expect, rtol=1e-12)


def test_ibs_all_censored():
    t = np.arange(1.0, 11.0)
    with pytest.raises(ValueError, match="censored"):
        M.ibs(np.full((10, 5), 0.5), t, np.zeros(10, int))


def test_ibs_model_close_to_truth(linear_fit):
    model, test, truth = linear_fit
    pred = B.predict(model, test)
    for j, (y, d) in enumerate(((test.time1, test.status1), (test.time2, test.status2)), start=1):
        grid = M.default_grid(y)
        fitted = M.ibs(pred.survival(j, grid), y, d, grid)
        oracle = M.ibs(truth.survival(j, grid), y, d, grid)
        assert abs(fitted - oracle) <= 0.10 * oracle


# ------------------------------------------------------------- ISE / IAE

def test_ise_iae_exact():
    grid = np.linspace(0, 1, 101)
    S = np.exp(-np.outer(np.linspace(0.5, 2, 7), grid))
    assert M.ise_iae(S, S, grid) == (0.0, 0.0)
    ise, iae = M.ise_iae(S + 0.1, S, grid)
    assert iae == pytest.approx(0.1, abs=1e-14)
    assert ise == pytest.approx(0.01, abs=1e-14)


def test_ise_iae_refined_grid():
    rng = np.random.default_rng(3)
    rates = rng.uniform(0.5, 2.0, 20)
    shift = rng.uniform(-0.2, 0.2, 20)

    def curves(g):
        true = np.exp(-np.outer(rates, g))
        est = np.exp(-np.outer(rates * (1 + shift), g))
        return est, true

    g = np.linspace(0, 3, 100)
    fine = np.linspace(0, 3, 1000)
    coarse = M.ise_iae(*curves(g), g)
    dense = M.ise_iae(*curves(fine), fine)
    doubled = np.linspace(0, 3, 199)
    assert np.max(np.abs(np.subtract(coarse, dense))) < 1e-3
    assert np.max(np.abs(np.subtract(coarse, M.ise_iae(*curves(doubled), doubled)))) < 1e-3
    est, true = curves(g)
    ise, iae = M.ise_iae(est, true, g)
    assert ise <= iae * np.max(np.abs(est - true)) + 1e-15


# -------------------------------------------------------------- C-index

def test_c_index_perfect():
    t = np.random.default_rng(4).exponential(size=200)
    assert M.c_index(-t, t, np.ones(200, int)) == 1.0
    assert M.c_index(t, t, np.ones(200, int)) == 0.0


def test_c_index_chance():
    rng = np.random.default_rng(5)
    t = rng.exponential(size=5000)
    assert M.c_index(rng.normal(size=5000), t, rng.integers(0, 2, 5000)) == pytest.approx(0.5, abs=0.02)


def test_c_index_brute_force():
    t = np.array([2.0, 5.0, 3.0, 3.0, 8.0])
    d = np.array([1, 0, 1, 1, 0])
    r = np.array([0.9, 0.1, 0.4, 0.4, 0.2])
    conc = comp = 0.0
    for i, j in itertools.permutations(range(5), 2):
        if d[i] == 1 and t[i] < t[j]:
            comp += 1
            conc += 1.0 if r[i] > r[j] else 0.5 if r[i] == r[j] else 0.0
    assert M.c_index(r, t, d) == pytest.approx(conc / comp, abs=1e-15)
    assert M.c_index(r, t, d, chunk=1) == M.c_index(r, t, d)


def test_c_index_monotone_invariance():
    rng = np.random.default_rng(6)
    t = rng.exponential(size=400)
    d = rng.integers(0, 2, 400)
    r = rng.normal(size=400) - t
    assert M.c_index(np.exp(r), t, d) == M.c_index(r, t, d)


def test_c_index_no_pairs():
    with pytest.raises(ValueError):
        M.c_index([1.0, 2.0], [1.0, 2.0], [0, 0])


# ------------------------------------------------------------- log-score

def test_log_score_single_pair_under_independence():
    X = np.zeros((1, 1))
    data = BivariateSurvDataset([1.3], [1], [0.7], [1], X, ["x1"])
    spec = B.ModelSpec.build("weibull", "lognormal", "independence", ["x1"])
    model = B.fit(data, spec, B.BoostConfig(mstop={"margin1": 0, "margin2": 0}, early_stopping=False))
    th = B.predict(model, data).theta
    expect = -(Mg.log_density(F.WEIBULL, 1.3, th[P[0]], th[P[1]])
               + Mg.log_density(F.LOGNORMAL, 0.7, th[P[2]], th[P[3]]))
    assert M.log_score(model, data) == pytest.approx(float(expect[0]), rel=1e-12)


def test_log_score_additive_and_doubling(linear_fit):
    model, test, _ = linear_fit
    a, b = test.subset(np.arange(0, 300)), test.subset(np.arange(300, 700))
    ab = test.subset(np.arange(0, 700))
    assert M.log_score(model, ab) == pytest.approx(M.log_score(model, a) + M.log_score(model, b), rel=1e-12)
    twice = test.subset(np.r_[np.arange(300), np.arange(300)])
    assert M.log_score(model, twice) == pytest.approx(2 * M.log_score(model, a), rel=1e-12)
    with pytest.raises(ValueError):
        M.log_score(model, test.subset(np.array([], int)))


# ------------------------------------------------------------- selection

def _fake_model(selected, covs=("x1", "x2", "x3", "x4")):
    forms = {p: SimpleNamespace(covariates=covs) for p in P}
    return SimpleNamespace(spec=SimpleNamespace(active_parameters=P, formulas=forms),
                           selected=lambda: selected)


def test_selection_rates_examples():
    inf = {p: ["x1", "x2"] for p in P}
    full = M.selection_rates(_fake_model({p: ["x1", "x2"] for p in P}), inf)
    assert all(v == {"tpr": 1.0, "fpr": 0.0} for v in full.values())
    none = M.selection_rates(_fake_model({p: [] for p in P}), inf)
    assert all(v == {"tpr": 0.0, "fpr": 0.0} for v in none.values())
    mixed = M.selection_rates(_fake_model({P[0]: ["x1", "x3"]}), {P[0]: ["x1", "x2"]})
    assert mixed[P[0]] == {"tpr": 0.5, "fpr": 0.5}
    assert mixed[P[1]]["tpr"] is None


def test_evaluate_report(linear_fit):
    model, test, truth = linear_fit
    rep = M.evaluate(model, test.subset(np.arange(2000)),
                     truth=_rows(truth, np.arange(2000))).to_dict()
    for j in (1, 2):
        m = rep["margins"][f"margin{j}"]
        assert 0 < m["ibs"] < 0.25 and 0.5 < m["c_index"] <= 1
        assert 0 <= m["ise"] <= m["iae"]
    assert rep["selection"][P[0]]["tpr"] == 1.0
    for v in rep["selection"].values():
        for r in v.values():
            assert r is None or 0 <= r <= 1
    with pytest.raises(ValueError):
        M.evaluate(model, test.subset(np.arange(10)), truth=truth)



def _rows(truth, rows):
    return dataclasses.replace(truth, eta={k: v[rows] for k, v in truth.eta.items()})
