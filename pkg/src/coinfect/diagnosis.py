"""Coinfection probability, threshold classification and cost-weighted
cross-validated calibration of the decision threshold.

Among malaria-positive patients the binary task is: positive = coinfected
(class 3), negative = malaria monoinfection (class 2).  The decision score
is P(coinfected | malaria) = pi_3 / (pi_3 + pi_2); a patient is flagged
arbovirus-positive when the score reaches the threshold gamma, optionally
gated by an age/sick-days filter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dataset as ds
from . import mlogit
from .rng import stream

__all__ = [
    "AgeDaysFilter",
    "ConfusionMatrix",
    "CalibrationResult",
    "coinfection_prob",
    "classify",
    "confusion",
    "mcr",
    "wmcr",
    "calibrate_gamma",
]

_AGE_COL = ds.COVARIATE_NAMES.index("age")
_DAYS_COL = ds.COVARIATE_NAMES.index("sick_days")


@dataclass(frozen=True)
class AgeDaysFilter:
    """Flag positives only above both thresholds (strict inequalities)."""

    age_min: float = 10.0
    days_min: float = 3.0


@dataclass(frozen=True)
class ConfusionMatrix:
    """2x2 counts for the binary arbovirus-positive decision."""

    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("counts must be nonnegative")

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def as_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}


@dataclass
class CalibrationResult:
    """Cross-validated threshold choice and the full per-gamma curve."""

    gamma_star: float
    curve: list          # (gamma, wmcr, fn_rate, fp_rate) tuples
    cost: float
    folds: int
    filter: AgeDaysFilter | None = None

    def as_dict(self) -> dict:
        return {
            "gamma_star": self.gamma_star,
            "cost": self.cost,
            "folds": self.folds,
            "filter": None if self.filter is None else
                {"age_min": self.filter.age_min, "days_min": self.filter.days_min},
            "curve": [
                {"gamma": g, "wmcr": w, "fn_rate": fnr, "fp_rate": fpr}
                for g, w, fnr, fpr in self.curve
            ],
        }


def coinfection_prob(fit: mlogit.FitResult, x) -> float | np.ndarray:
    """P(coinfected | malaria-positive) = pi_3 / (pi_3 + pi_2).

    Computed as the logistic of <x, b3> - <x, b2>, which only involves the
    two malaria-positive classes and is overflow-safe.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    Z = mlogit.design_matrix(x)
    b2, b3 = fit.coef.beta[1], fit.coef.beta[2]
    delta = Z @ (b3 - b2)
    out = np.empty_like(delta)
    pos = delta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-delta[pos]))
    eneg = np.exp(delta[~pos])
    out[~pos] = eneg / (1.0 + eneg)
    return float(out[0]) if single else out


def classify(prob, gamma: float, x=None, flt: AgeDaysFilter | None = None):
    """Arbovirus-positive decision: prob >= gamma (inclusive), optionally
    requiring age > flt.age_min and sick_days > flt.days_min."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must be in [0, 1]")
    prob = np.asarray(prob, dtype=np.float64)
    single = prob.ndim == 0
    label = prob >= gamma
    if flt is not None:
        if x is None:
            raise ValueError("covariates required when a filter is given")
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        label = label & (x[:, _AGE_COL] > flt.age_min) & (x[:, _DAYS_COL] > flt.days_min)
    label = np.asarray(label).astype(np.int64)
    return int(label.reshape(-1)[0]) if single else label


def confusion(predictions, truths) -> ConfusionMatrix:
    """Tabulate predicted against actual binary labels."""
    predictions = np.asarray(predictions, dtype=bool)
    truths = np.asarray(truths, dtype=bool)
    if predictions.shape != truths.shape:
        raise ValueError("predictions and truths must have equal length")
    return ConfusionMatrix(
        tp=int(np.sum(predictions & truths)),
        fp=int(np.sum(predictions & ~truths)),
        tn=int(np.sum(~predictions & ~truths)),
        fn=int(np.sum(~predictions & truths)),
    )


def mcr(cm: ConfusionMatrix) -> float:
    """Miss-classification rate (FP + FN) / N."""
    if cm.n == 0:
        raise ValueError("empty confusion matrix")
    return (cm.fp + cm.fn) / cm.n


def wmcr(cm: ConfusionMatrix, c: float) -> float:
    """Weighted miss-classification rate (FP + c * FN) / N, c >= 1."""
    if c < 1.0:
        raise ValueError("cost c must be >= 1")
    if cm.n == 0:
        raise ValueError("empty confusion matrix")
    return (cm.fp + c * cm.fn) / cm.n


def _stratified_folds(y, folds: int, seed: int):
    """Deal each class round-robin into folds after a seeded shuffle."""
    assignment = np.empty(len(y), dtype=np.int64)
    for k in np.unique(y):
        idx = np.flatnonzero(y == k)
        idx = idx[stream(seed, 4, int(k)).permutation(len(idx))]
        assignment[idx] = np.arange(len(idx)) % folds
    return assignment


def default_gamma_grid(step: float = 0.01) -> np.ndarray:
    return np.round(np.arange(0.0, 1.0 + step / 2, step), 10)


def calibrate_gamma(data: ds.Dataset, folds: int = 5, c: float = 2.0,
                    grid=None, seed: int = 0,
                    flt: AgeDaysFilter | None = None,
                    fit_kwargs: dict | None = None) -> CalibrationResult:
    """Choose the threshold gamma by stratified k-fold cross-validation.

    The 4-class model is fitted on each fold's complement (all classes);
    the held-out malaria-positive records are scored and the WMCR curve is
    averaged across folds.  gamma_star minimizes the averaged curve, ties
    going to the smallest gamma.
    """
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if c < 1.0:
        raise ValueError("cost c must be >= 1")
    grid = default_gamma_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    counts = data.class_counts()
    if counts[2] < folds or counts[3] < folds:
        raise ValueError(
            f"classes 2 and 3 need at least {folds} records each for "
            f"{folds}-fold stratification (have {counts[2]} and {counts[3]})")
    fit_kwargs = fit_kwargs or {}

    assignment = _stratified_folds(data.y, folds, seed)
    wmcr_curve = np.zeros(len(grid))
    fn_curve = np.zeros(len(grid))
    fp_curve = np.zeros(len(grid))
    for f in range(folds):
        train = assignment != f
        test = (~train) & np.isin(data.y, (2, 3))
        fit = mlogit.fit(data.X[train], data.y[train],
                         names=data.covariate_names, **fit_kwargs)
        probs = coinfection_prob(fit, data.X[test])
        truth = data.y[test] == 3
        Xtest = data.X[test]
        n_test = len(probs)
        for gi, gamma in enumerate(grid):
            pred = classify(probs, float(gamma), Xtest, flt).astype(bool)
            cm = confusion(pred, truth)
            wmcr_curve[gi] += wmcr(cm, c)
            fn_curve[gi] += cm.fn / n_test
            fp_curve[gi] += cm.fp / n_test
    wmcr_curve /= folds
    fn_curve /= folds
    fp_curve /= folds
    best = int(np.argmin(wmcr_curve))   # first minimum = smallest gamma
    curve = [(float(g), float(w), float(fnr), float(fpr))
             for g, w, fnr, fpr in zip(grid, wmcr_curve, fn_curve, fp_curve)]
    return CalibrationResult(float(grid[best]), curve, c, folds, flt)
