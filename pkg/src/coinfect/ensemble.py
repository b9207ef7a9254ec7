"""Balanced-undersampling ensemble for heavily imbalanced data.

Minority classes are kept whole; a fixed number of records is drawn without
replacement from each majority class, B times, and the requested analyses
(model fit, independence test, odds ratios, variable selection) run on every
balanced sub-sample.  Each draw uses a substream derived from (seed, draw
index), so the aggregated report is identical however the sub-samples are
scheduled.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import dataset as ds
from . import effects, forest, mlogit
from .rng import stream

__all__ = [
    "UndersampleSpec",
    "AnalysisConfig",
    "EnsembleReport",
    "undersample",
    "run_ensemble",
]


@dataclass(frozen=True)
class UndersampleSpec:
    """How to balance: which classes to thin, to how many records, how often."""

    n_majority: int = 50
    majority_classes: tuple = (0, 2)
    B: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.n_majority < 1:
            raise ValueError("n_majority must be >= 1")
        if self.B < 1:
            raise ValueError("B must be >= 1")


@dataclass
class AnalysisConfig:
    """Which analyses to run on each sub-sample."""

    fit: bool = True
    wald: bool = False
    odds: bool = False
    vsurf: bool = False
    forest_config: forest.ForestConfig = field(default_factory=forest.ForestConfig)
    n_forests: int = 25
    increments: dict | None = None       # covariate name -> d; default canonical
    fit_kwargs: dict = field(default_factory=dict)


def _increments_for(names):
    out = {}
    for name in names:
        out[name] = effects.CANONICAL_INCREMENTS.get(name, 1.0)
    return out


def undersample(data: ds.Dataset, spec: UndersampleSpec, draw_index: int) -> ds.Dataset:
    """One balanced sub-sample; deterministic in (spec.seed, draw_index).

    Minority-class records are all kept; each majority class contributes
    n_majority records drawn without replacement.  Output rows are ordered
    by class, then by original position.
    """
    counts = data.class_counts()
    for k in spec.majority_classes:
        if counts[k] < spec.n_majority:
            raise ValueError(
                f"class {k} has {counts[k]} records, fewer than n_majority={spec.n_majority}")
    keep = []
    for k in range(4):
        idx = np.flatnonzero(data.y == k)
        if k in spec.majority_classes:
            rng = stream(spec.seed, 5, draw_index, k)
            chosen = rng.choice(len(idx), size=spec.n_majority, replace=False)
            idx = np.sort(idx[chosen])
        keep.append(idx)
    return data.subset(np.concatenate(keep))


def _box_stats(values: np.ndarray) -> dict:
    q1, med, q3 = np.percentile(values, [25, 50, 75])
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = values[(values >= lo_fence) & (values <= hi_fence)]
    return {
        "median": float(med),
        "q1": float(q1),
        "q3": float(q3),
        "whisker_low": float(inside.min()) if len(inside) else float(q1),
        "whisker_high": float(inside.max()) if len(inside) else float(q3),
        "n": int(len(values)),
    }


@dataclass
class EnsembleReport:
    """Aggregates over the B sub-samples."""

    B: int
    covariate_names: tuple
    selection_counts: np.ndarray | None = None
    wald_pvalues: np.ndarray | None = None
    or_samples: dict | None = None       # (k, name) -> length-B array, NaN = excluded
    converged: np.ndarray | None = None
    separation: np.ndarray | None = None

    @property
    def selection_frequency(self) -> np.ndarray | None:
        if self.selection_counts is None:
            return None
        return self.selection_counts / self.B

    def wald_fraction_below(self, alpha: float = 0.05) -> float | None:
        if self.wald_pvalues is None:
            return None
        ok = ~np.isnan(self.wald_pvalues)
        return float(np.mean(self.wald_pvalues[ok] < alpha)) if ok.any() else None

    def n_or_excluded(self) -> int:
        if not self.or_samples:
            return 0
        any_key = next(iter(self.or_samples))
        return int(np.isnan(self.or_samples[any_key]).sum())

    def as_dict(self) -> dict:
        out: dict = {"B": self.B, "covariate_names": list(self.covariate_names)}
        if self.selection_counts is not None:
            out["selection"] = [
                {"covariate": name, "count": int(c), "frequency": c / self.B}
                for name, c in zip(self.covariate_names, self.selection_counts)
            ]
        if self.wald_pvalues is not None:
            ok = ~np.isnan(self.wald_pvalues)
            out["wald"] = {
                "p_values": [None if np.isnan(p) else float(p) for p in self.wald_pvalues],
                "fraction_below_0.05": (
                    float(np.mean(self.wald_pvalues[ok] < 0.05)) if ok.any() else None),
                "n_failed": int((~ok).sum()),
            }
        if self.or_samples is not None:
            table = []
            for (k, name), vals in self.or_samples.items():
                good = vals[~np.isnan(vals)]
                entry = {"class": k, "covariate": name,
                         "n_excluded": int(np.isnan(vals).sum())}
                if len(good):
                    entry.update(_box_stats(good))
                table.append(entry)
            out["odds_ratios"] = table
        if self.converged is not None:
            out["flags"] = {
                "n_converged": int(self.converged.sum()),
                "n_separation": int(self.separation.sum()),
            }
        return out

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2)


def run_ensemble(data: ds.Dataset, spec: UndersampleSpec,
                 analysis: AnalysisConfig | None = None) -> EnsembleReport:
    """Draw B balanced sub-samples and aggregate the requested analyses.

    Fits flagged for separation or non-convergence still count toward
    selection frequencies and test p-values but are excluded from the
    odds-ratio distributions (their entries stay NaN).
    """
    analysis = analysis or AnalysisConfig()
    names = data.covariate_names
    p = len(names)
    need_fit = analysis.fit or analysis.wald or analysis.odds

    selection_counts = np.zeros(p, dtype=np.int64) if analysis.vsurf else None
    wald_p = np.full(spec.B, np.nan) if analysis.wald else None
    increments = analysis.increments or _increments_for(names)
    or_samples = (
        {(k, name): np.full(spec.B, np.nan) for k in (1, 2, 3) for name in names}
        if analysis.odds else None)
    converged = np.zeros(spec.B, dtype=bool) if need_fit else None
    separation = np.zeros(spec.B, dtype=bool) if need_fit else None

    for b in range(spec.B):
        sub = undersample(data, spec, b)
        if need_fit:
            fit = mlogit.fit(sub.X, sub.y, names=names, **analysis.fit_kwargs)
            converged[b] = fit.converged
            separation[b] = fit.separation_flag
            if analysis.wald:
                try:
                    wald_p[b] = mlogit.wald_independence(fit).p_value
                except (mlogit.FitError, ValueError):
                    pass
            if analysis.odds and fit.converged and not fit.separation_flag:
                for j, name in enumerate(names):
                    d = increments.get(name, 1.0)
                    for k in (1, 2, 3):
                        or_samples[(k, name)][b] = float(
                            np.exp(fit.coef.beta[k - 1, j + 1] * d))
        if analysis.vsurf:
            cfg = forest.ForestConfig(
                analysis.forest_config.ntree, analysis.forest_config.mtry,
                analysis.forest_config.min_node_size, analysis.forest_config.max_depth,
                int(stream(spec.seed, 6, b).integers(2**31)))
            sel = forest.vsurf_select(sub.X, sub.y, cfg,
                                      n_forests=analysis.n_forests, names=names)
            for j in sel.selected:
                selection_counts[j] += 1

    return EnsembleReport(
        B=spec.B,
        covariate_names=names,
        selection_counts=selection_counts,
        wald_pvalues=wald_p,
        or_samples=or_samples,
        converged=converged,
        separation=separation,
    )
