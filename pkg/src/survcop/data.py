"""Bivariate right-censored data container."""
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError


@dataclass
class BivariateSurvDataset:
    """Observed times, event indicators (1 = event observed) and covariates.

    ``scr`` flags semi-competing-risks data, where the second event is
    terminal: ``time1 <= time2`` and a censored terminal event implies the
    first event was observed or censored at the same time.
    """

    time1: np.ndarray
    status1: np.ndarray
    time2: np.ndarray
    status2: np.ndarray
    X: np.ndarray
    covariate_names: list = field(default_factory=list)
    scr: bool = False

    def __post_init__(self):
        self.time1 = np.asarray(self.time1, dtype=float)
        self.time2 = np.asarray(self.time2, dtype=float)
        self.status1 = np.asarray(self.status1).astype(int)
        self.status2 = np.asarray(self.status2).astype(int)
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(len(self.time1), -1)
        self.X = X
        if not self.covariate_names:
            self.covariate_names = [f"x{j + 1}" for j in range(X.shape[1])]
        self.covariate_names = list(self.covariate_names)
        self.validate()

    @property
    def n(self):
        return len(self.time1)

    @property
    def p(self):
        return self.X.shape[1]

    def validate(self):
        n = len(self.time1)
        for name in ("time2", "status1", "status2"):
            if len(getattr(self, name)) != n:
                raise ValidationError(f"{name} has length {len(getattr(self, name))}, expected {n}")
        if self.X.shape[0] != n:
            raise ValidationError("covariate matrix row count does not match the responses")
        if len(self.covariate_names) != self.X.shape[1]:
            raise ValidationError("covariate name count does not match the covariate matrix")
        if len(set(self.covariate_names)) != len(self.covariate_names):
            raise ValidationError("duplicate covariate names")
        for name in ("time1", "time2"):
            t = getattr(self, name)
            bad = np.flatnonzero(~(np.isfinite(t) & (t > 0)))
            if bad.size:
                raise ValidationError(f"{name} must be strictly positive (rows {bad[:5].tolist()})")
        for name in ("status1", "status2"):
            s = getattr(self, name)
            bad = np.flatnonzero((s != 0) & (s != 1))
            if bad.size:
                raise ValidationError(f"{name} must be 0/1 (rows {bad[:5].tolist()})")
        if not np.all(np.isfinite(self.X)):
            raise ValidationError("covariates contain missing or non-finite values")
        if self.scr:
            self.check_scr()

    def check_scr(self):
        bad = np.flatnonzero(self.time1 > self.time2)
        if bad.size:
            raise ValidationError(f"SCR data require time1 <= time2 (rows {bad[:5].tolist()})")
        bad = np.flatnonzero((self.status2 == 0) & (self.status1 == 0) & (self.time1 != self.time2))
        if bad.size:
            raise ValidationError(
                "SCR data: censored terminal event requires an observed first event or "
                f"time1 == time2 (rows {bad[:5].tolist()})")

    def subset(self, idx):
        idx = np.asarray(idx)
        return BivariateSurvDataset(self.time1[idx], self.status1[idx], self.time2[idx],
                                    self.status2[idx], self.X[idx], self.covariate_names, self.scr)

    def columns(self, names):
        pos = {c: j for j, c in enumerate(self.covariate_names)}
        missing = [c for c in names if c not in pos]
        if missing:
            raise ValidationError(f"unknown covariates {missing}")
        return self.X[:, [pos[c] for c in names]]

    def censoring_rates(self):
        return 1.0 - self.status1.mean(), 1.0 - self.status2.mean()
