"""CSV datasets and deterministic JSON files."""
import csv
import json
import math

import numpy as np

from .data import BivariateSurvDataset
from .errors import ValidationError

RESPONSE_COLUMNS = ("time1", "status1", "time2", "status2")


def _rows(path):
    """Yield (line_number, fields) for non-comment, non-blank CSV lines."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for fields in reader:
            line = reader.line_num
            if not fields or (len(fields) == 1 and not fields[0].strip()):
                continue
            if fields[0].lstrip().startswith("#"):
                continue
            yield line, fields


def read_dataset(path, scr=False):
    rows = _rows(path)
    try:
        line, header = next(rows)
    except StopIteration:
        raise ValidationError(f"{path}: empty file") from None
    header = [h.strip() for h in header]
    missing = [c for c in RESPONSE_COLUMNS if c not in header]
    if missing:
        raise ValidationError(f"{path}:{line}: missing required columns {missing}")
    if len(set(header)) != len(header):
        raise ValidationError(f"{path}:{line}: duplicate column names")
    values = []
    for line, fields in rows:
        if len(fields) != len(header):
            raise ValidationError(f"{path}:{line}: expected {len(header)} fields, found {len(fields)}")
        try:
            vals = [float(f) for f in fields]
        except ValueError:
            bad = next(f for f in fields if not _is_float(f))
            raise ValidationError(f"{path}:{line}: non-numeric or missing cell {bad!r}") from None
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError(f"{path}:{line}: non-finite cell")
        values.append((line, vals))
    if not values:
        raise ValidationError(f"{path}: no data rows")
    A = np.array([v for _, v in values])
    lines = np.array([ln for ln, _ in values])
    col = {h: j for j, h in enumerate(header)}
    for name in ("time1", "time2"):
        bad = np.flatnonzero(~(A[:, col[name]] > 0))
        if bad.size:
            raise ValidationError(f"{path}:{lines[bad[0]]}: {name} must be strictly positive")
    for name in ("status1", "status2"):
        bad = np.flatnonzero(~np.isin(A[:, col[name]], (0.0, 1.0)))
        if bad.size:
            raise ValidationError(f"{path}:{lines[bad[0]]}: {name} must be 0 or 1")
    covs = [h for h in header if h not in RESPONSE_COLUMNS]
    X = A[:, [col[c] for c in covs]] if covs else np.zeros((A.shape[0], 0))
    return BivariateSurvDataset(A[:, col["time1"]], A[:, col["status1"]].astype(int),
                                A[:, col["time2"]], A[:, col["status2"]].astype(int),
                                X, covs, scr=scr)


def _is_float(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def fmt(v):
    """Shortest round-trip representation of a number."""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path, header, columns, comments=()):
    n = len(columns[0]) if columns else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(n):
            w.writerow([fmt(col[i]) for col in columns])


def write_dataset(path, data, comments=()):
    header = list(RESPONSE_COLUMNS) + list(data.covariate_names)
    cols = [data.time1, data.status1, data.time2, data.status2] + [data.X[:, j] for j in range(data.p)]
    write_csv(path, header, cols, comments)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def dumps(obj):
    return json.dumps(_clean(obj), sort_keys=True, indent=1, allow_nan=False) + "\n"


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(obj))


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as e:
            raise ValidationError(f"{path}:{e.lineno}: invalid JSON ({e.msg})") from None
