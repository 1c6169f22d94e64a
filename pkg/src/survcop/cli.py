"""Command-line interface: ``survcop {simulate,fit,predict,evaluate,scan}``.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.  The
environment variable ``SURVCOP_THREADS`` caps native thread pools.
"""
import argparse
import os
import sys
import warnings

import jsonschema
import numpy as np
from threadpoolctl import threadpool_limits

from . import io, metrics
from .boost import PARAMETERS, BoostConfig, FittedModel, Formula, ModelSpec, fit, predict
from .copulas import CopulaFamily, all_families
from .errors import ConvergenceError, DomainError, NonFiniteError, ValidationError
from .likelihood import loglik_univariate
from .margins import MarginFamily
from .simulate import SCENARIOS, Scenario, TruthRecord, gen_bivariate

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3

_FORMULA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "covariates": {"oneOf": [{"const": "all"}, {"type": "array", "items": {"type": "string"}}]},
        "learner": {"enum": ["linear", "pspline"]},
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "margins": {"type": "array", "items": {"type": "string"}, "minItems": 2, "maxItems": 2},
        "copula": {"oneOf": [
            {"type": "string"},
            {"type": "object", "additionalProperties": False, "required": ["family"],
             "properties": {"family": {"type": "string"}, "rotation": {"enum": [0, 90, 180, 270]}}},
        ]},
        "mode": {"enum": ["bte", "scr"]},
        "step_length": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "mstop": {"type": "object", "additionalProperties": False,
                  "properties": {k: {"type": "integer", "minimum": 0}
                                 for k in ("margin1", "margin2", "copula", "joint")}},
        "stabilization": {"enum": ["L2", "MAD", "none", "l2", "mad"]},
        "split": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 2, "maxItems": 3},
        "seed": {"type": "integer"},
        "patience": {"oneOf": [{"type": "integer", "minimum": 1}, {"type": "null"}]},
        "formula": {"type": "object", "additionalProperties": False,
                    "properties": {k: _FORMULA for k in ("default",) + PARAMETERS}},
        "spline": {"type": "object", "additionalProperties": False,
                   "properties": {"n_knots": {"type": "integer", "minimum": 1},
                                  "degree": {"type": "integer", "minimum": 1},
                                  "diff_order": {"type": "integer", "minimum": 1},
                                  "df": {"type": "number", "exclusiveMinimum": 0}}},
    },
}

DEFAULT_CONFIG = {
    "margins": ["WEIBULL", "LOGLOGISTIC"],
    "copula": "GUMBEL",
    "mode": "bte",
    "step_length": 0.1,
    "mstop": {"margin1": 1000, "margin2": 1000, "copula": 1000},
    "stabilization": "L2",
    "split": [0.5, 0.5],
    "seed": 1,
    "patience": None,
    "formula": {"default": {"covariates": "all", "learner": "linear"}},
}


def load_config(path):
    cfg = io.read_json(path) if path else {}
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ValidationError(f"{path}: config error at {where}: {e.message}") from None
    out = dict(DEFAULT_CONFIG)
    out.update(cfg)
    return out


def parse_copula(value):
    if isinstance(value, dict):
        return CopulaFamily.parse(f"{value['family']}{value.get('rotation', 0) or ''}")
    return CopulaFamily.parse(value)


def build_spec(cfg, names, copula=None, margins=None):
    forms = cfg.get("formula", {})
    default = forms.get("default", {"covariates": "all", "learner": "linear"})
    formulas = {}
    for p in PARAMETERS:
        f = dict(default)
        f.update(forms.get(p, {}))
        covs = names if f.get("covariates", "all") == "all" else f["covariates"]
        formulas[p] = Formula(tuple(covs), f.get("learner", "linear"))
    m1, m2 = margins or cfg["margins"]
    spec = ModelSpec(m1, m2, copula or parse_copula(cfg["copula"]), formulas, cfg["mode"])
    spec.check_schema(names)
    return spec


def parse_split(text):
    try:
        fr = [float(x) for x in str(text).split(",")]
    except ValueError:
        raise ValidationError(f"invalid split {text!r}") from None
    return fr


def split_rows(n, fractions, seed):
    """Seeded partition into (train, mstop, test) row indices."""
    fr = np.asarray(fractions, dtype=float)
    if fr.size not in (2, 3) or np.any(fr < 0) or fr.sum() <= 0:
        raise ValidationError("split needs 2 or 3 non-negative fractions")
    fr = fr / fr.sum()
    perm = np.random.Generator(np.random.Philox(int(seed))).permutation(n)
    cuts = np.round(np.cumsum(fr) * n).astype(int)
    parts = np.split(perm, cuts[:-1])
    parts = [np.sort(p) for p in parts]
    if parts[0].size == 0:
        raise ValidationError("split leaves no training rows")
    return parts[0], parts[1], (parts[2] if len(parts) == 3 else np.array([], int))


def boost_config(cfg, n_fit, oob_weights):
    return BoostConfig(step_length=cfg["step_length"], mstop=dict(cfg["mstop"]),
                       stabilization=cfg["stabilization"], oob_weights=oob_weights,
                       seed=cfg["seed"], early_stopping=oob_weights is not None and not np.all(oob_weights == 1),
                       patience=cfg.get("patience"), spline={**BoostConfig().spline, **cfg.get("spline", {})})


def prepare_fit(data, cfg):
    """Fitting rows, out-of-bag weights and held-out test rows for a config."""
    train, mstop, test = split_rows(data.n, cfg["split"], cfg["seed"])
    fit_rows = np.sort(np.concatenate([train, mstop]))
    weights = np.isin(fit_rows, train).astype(int)
    return fit_rows, (weights if mstop.size else None), test


# ------------------------------------------------------------------ commands

def cmd_simulate(args):
    if args.scenario == "custom":
        if not args.config:
            raise ValidationError("custom scenario requires --config")
        sc = io.read_json(args.config)
        if not isinstance(sc, dict):
            raise ValidationError("custom scenario config must be a JSON object")
        sc.setdefault("n", args.n)
        sc.setdefault("p", args.p)
        sc.setdefault("seed", args.seed)
        if args.rho is not None:
            sc["rho"] = args.rho
        if "censoring_bounds" in sc and sc["censoring_bounds"] is not None:
            sc["censoring_bounds"] = tuple(sc["censoring_bounds"])
        try:
            scenario = Scenario(kind="custom", **sc)
        except TypeError as e:
            raise ValidationError(f"custom scenario: {e}") from None
    else:
        scenario = Scenario(args.scenario, n=args.n, p=args.p,
                            rho=0.5 if args.rho is None else args.rho,
                            censoring=args.censoring, seed=args.seed)
    data, truth = gen_bivariate(scenario)
    r1, r2 = data.censoring_rates()
    io.write_dataset(args.out, data, comments=[f"scenario {scenario.kind}; seed {scenario.seed}"])
    truth_path = args.truth or args.out + ".truth.json"
    io.write_json(truth_path, truth.to_dict())
    corr = np.corrcoef(data.X, rowvar=False) if data.p > 1 else np.ones((1, 1))
    off = np.abs(corr[~np.eye(data.p, dtype=bool)]) if data.p > 1 else np.zeros(1)
    print(io.dumps({"censoring_rate_1": r1, "censoring_rate_2": r2, "n": data.n, "p": data.p,
                    "mean_abs_covariate_correlation": float(off.mean()),
                    "data": args.out, "truth": truth_path}), end="")
    return EXIT_OK


def _fit_report(model):
    sel = model.selected()
    rows = {}
    for p in model.spec.active_parameters:
        st = model.stage_for(p)
        rows[p] = {"stage": st.name, "mstop": st.mstop, "selected": sel[p], "n_selected": len(sel[p])}
    return {"parameters": rows, "mstop": model.mstops(), "spec": model.spec.to_dict()}


def cmd_fit(args):
    cfg = load_config(args.config)
    if args.split:
        cfg["split"] = parse_split(args.split)
    if args.seed is not None:
        cfg["seed"] = args.seed
    data = io.read_dataset(args.data, scr=cfg["mode"] == "scr")
    spec = build_spec(cfg, data.covariate_names)
    rows, weights, test = prepare_fit(data, cfg)
    model = fit(data.subset(rows), spec, boost_config(cfg, rows.size, weights))
    out = model.to_dict()
    out["data_split"] = {"fractions": cfg["split"], "seed": cfg["seed"], "n": data.n,
                         "test_rows": test.tolist()}
    io.write_json(args.out, out)
    report = _fit_report(model)
    if args.report:
        io.write_json(args.report, report)
    print(io.dumps(report), end="")
    return EXIT_OK


def load_model(path):
    d = io.read_json(path)
    try:
        return FittedModel.from_dict(d), d.get("data_split")
    except (KeyError, TypeError) as e:
        raise ValidationError(f"{path}: malformed model file ({e})") from None


def _times(text):
    try:
        t = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ValidationError(f"invalid time list {text!r}") from None
    if not t or any(v <= 0 for v in t):
        raise ValidationError("query times must be positive")
    return t


def cmd_predict(args):
    model, _ = load_model(args.model)
    data = io.read_dataset(args.data)
    times = _times(args.times)
    pred = predict(model, data)
    th = pred.theta
    header, cols = ["row"], [np.arange(data.n)]
    for p in PARAMETERS:
        if p in model.spec.active_parameters:
            header += [f"eta_{p}", f"theta_{p}"]
            cols += [pred.surface.eta[p], th[p]]
    for j in (1, 2):
        S = pred.survival(j, times)
        for k, t in enumerate(times):
            header.append(f"S{j}_t{io.fmt(t)}")
            cols.append(S[:, k])
    for a in times:
        for b in times:
            header.append(f"S12_t{io.fmt(a)}_t{io.fmt(b)}")
            cols.append(pred.joint_survival(a, b))
    lo, up = pred.tail_dependence()
    header += ["kendall_tau", "psi_lower", "psi_upper", "cross_ratio_median"]
    cols += [pred.kendall_tau(), lo, up, pred.cross_ratio()]
    comments = [
        f"model {model.spec.margin1.value}/{model.spec.margin2.value}/{model.spec.copula.token} ({model.spec.mode})",
        "eta_*: predictors; theta_*: distribution parameters",
        "Sj_tT: marginal survival of event j at time T; S12_tA_tB: joint survival P(T1>A, T2>B)",
        "kendall_tau, psi_lower, psi_upper: dependence summaries of the predicted copula",
        "cross_ratio_median: local cross-ratio at both marginal medians",
    ]
    io.write_csv(args.out, header, cols, comments)
    return EXIT_OK


def cmd_evaluate(args):
    model, split = load_model(args.model)
    data = io.read_dataset(args.data)
    truth = None
    if args.truth:
        truth = TruthRecord.from_dict(io.read_json(args.truth))
    if args.test_split:
        if not split or not split.get("test_rows"):
            raise ValidationError("model has no stored test partition")
        if split["n"] != data.n:
            raise ValidationError("data size differs from the one the model was fitted on")
        rows = np.asarray(split["test_rows"], dtype=int)
        data = data.subset(rows)
        if truth is not None:
            truth.eta = {k: v[rows] for k, v in truth.eta.items()}
    if truth is not None and len(truth.eta[PARAMETERS[0]]) != data.n:
        raise ValidationError("truth record does not match the data")
    report = metrics.evaluate(model, data, truth).to_dict()
    if args.out:
        io.write_json(args.out, report)
    print(io.dumps(report), end="")
    return EXIT_OK


def univariate_score(model, data, j):
    pred = predict(model, data)
    e = pred.surface.eta
    fam = model.spec.margin1 if j == 1 else model.spec.margin2
    y, d = (data.time1, data.status1) if j == 1 else (data.time2, data.status2)
    a, b = (e[PARAMETERS[0]], e[PARAMETERS[1]]) if j == 1 else (e[PARAMETERS[2]], e[PARAMETERS[3]])
    return -float(np.sum(loglik_univariate(y, d, fam, a, b)))


def scan(data, cfg, margin_names, copula_names):
    """Rank margin families per event, then copulas given the winning margins.

    Requires a three-way split; scores are held-out log-scores (lower is better).
    """
    if len(cfg["split"]) != 3:
        raise ValidationError("scan needs a train/mstop/test split (three fractions)")
    cfg = dict(cfg, mode="bte")
    rows, weights, test = prepare_fit(data, cfg)
    if test.size == 0:
        raise ValidationError("scan needs a nonempty test partition")
    fit_data, test_data = data.subset(rows), data.subset(test)
    conf = boost_config(cfg, rows.size, weights)
    fams = [MarginFamily.parse(m) for m in margin_names]
    table = []
    best = {}
    for j in (1, 2):
        scores = []
        for fam in fams:
            spec = build_spec(cfg, data.covariate_names, copula=CopulaFamily.parse("independence"),
                              margins=(fam, fam))
            model = fit(fit_data, spec, conf)
            scores.append((univariate_score(model, test_data, j), fam.value))
        for rank, (s, name) in enumerate(sorted(scores), start=1):
            table.append({"stage": "margin", "event": j, "family": name, "log_score": s, "rank": rank})
        best[j] = sorted(scores)[0][1]
    cops = all_families() if copula_names == ["all"] else [CopulaFamily.parse(c) for c in copula_names]
    scores = []
    warm = None
    for cop in cops:
        spec = build_spec(cfg, data.covariate_names, copula=cop, margins=(best[1], best[2]))
        model = fit(fit_data, spec, conf, warm=warm)
        warm = model
        scores.append((metrics.log_score(model, test_data), cop.token))
    for rank, (s, name) in enumerate(sorted(scores), start=1):
        table.append({"stage": "copula", "event": None, "family": name, "log_score": s, "rank": rank,
                      "margins": [best[1], best[2]]})
    return table


def cmd_scan(args):
    cfg = load_config(args.config)
    if args.split:
        cfg["split"] = parse_split(args.split)
    elif len(cfg["split"]) != 3:
        cfg["split"] = [0.5, 0.25, 0.25]
    if args.seed is not None:
        cfg["seed"] = args.seed
    data = io.read_dataset(args.data)
    margin_names = [m.strip() for m in args.margins.split(",") if m.strip()]
    copula_names = [c.strip() for c in args.copulas.split(",") if c.strip()]
    table = scan(data, cfg, margin_names, copula_names)
    if args.out:
        io.write_json(args.out, {"table": table})
    lines = [f"{'stage':<7} {'event':<5} {'family':<14} {'log-score':>12} {'rank':>4}"]
    for r in table:
        ev = "" if r["event"] is None else str(r["event"])
        lines.append(f"{r['stage']:<7} {ev:<5} {r['family']:<14} {r['log_score']:>12.3f} {r['rank']:>4}")
    print("\n".join(lines))
    return EXIT_OK


# ---------------------------------------------------------------------- main

def build_parser():
    ap = argparse.ArgumentParser(prog="survcop", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate a dataset and its truth record")
    s.add_argument("--scenario", required=True, choices=SCENARIOS)
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--p", type=int, default=10)
    s.add_argument("--rho", type=float, default=None)
    s.add_argument("--censoring", choices=("mild", "heavy"), default="mild")
    s.add_argument("--seed", type=int, default=1)
    s.add_argument("--config", help="JSON description of a custom scenario")
    s.add_argument("--out", required=True)
    s.add_argument("--truth", help="truth sidecar path (default: OUT.truth.json)")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="fit a model")
    f.add_argument("--data", required=True)
    f.add_argument("--config")
    f.add_argument("--out", required=True)
    f.add_argument("--report")
    f.add_argument("--split", help="train,mstop[,test] fractions, e.g. 0.5,0.25,0.25")
    f.add_argument("--seed", type=int)
    f.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predict distributions for new covariates")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--times", required=True, help="comma-separated query times")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    e = sub.add_parser("evaluate", help="held-out evaluation report")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--truth")
    e.add_argument("--test-split", action="store_true",
                   help="evaluate on the test rows stored in the model file")
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)

    c = sub.add_parser("scan", help="rank margin and copula families by held-out log-score")
    c.add_argument("--data", required=True)
    c.add_argument("--config")
    c.add_argument("--margins", default="WEIBULL,LOGNORMAL,LOGLOGISTIC")
    c.add_argument("--copulas", default="all")
    c.add_argument("--split", help="train,mstop,test fractions (default 0.5,0.25,0.25)")
    c.add_argument("--seed", type=int)
    c.add_argument("--out")
    c.set_defaults(func=cmd_scan)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    threads = os.environ.get("SURVCOP_THREADS")
    try:
        limit = int(threads) if threads else None
        if limit is not None and limit < 1:
            raise ValueError
    except ValueError:
        print("error: SURVCOP_THREADS must be a positive integer", file=sys.stderr)
        return EXIT_INVALID
    try:
        with threadpool_limits(limits=limit), warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except (ValidationError, DomainError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except (NonFiniteError, ConvergenceError, FloatingPointError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
