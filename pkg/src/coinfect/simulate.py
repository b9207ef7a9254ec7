"""Synthetic patient generation from a known multinomial-logit ground truth.

Covariate marginals are independent by default (continuous: uniform or
truncated normal; binary: Bernoulli).  Labels are drawn from the same class
probabilities the fitting code computes, so every inferential claim can be
checked against a known truth.  Generation is organized in fixed-size blocks
with per-block random substreams, so output depends only on the master seed,
never on scheduling.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import dataset as ds
from .mlogit import CoefMatrix, predict_proba
from .rng import stream

__all__ = [
    "CovariateLaw",
    "GeneratorSpec",
    "SpecError",
    "default_covariate_law",
    "sample_covariates",
    "sample_labels",
    "generate",
]

_BLOCK = 4096


class SpecError(ValueError):
    """Invalid generator specification."""


@dataclass(frozen=True)
class CovariateLaw:
    """Marginal law of one covariate.

    dist: "uniform" (low, high), "truncnorm" (mean, sd, low, high) or
    "bernoulli" (q).
    """

    dist: str
    low: float = 0.0
    high: float = 1.0
    mean: float = 0.0
    sd: float = 1.0
    q: float = 0.5

    def validate(self, name: str = ""):
        if self.dist == "bernoulli":
            if not 0.0 <= self.q <= 1.0:
                raise SpecError(f"{name}: Bernoulli parameter must be in [0,1]")
        elif self.dist in ("uniform", "truncnorm"):
            if not self.low < self.high:
                raise SpecError(f"{name}: need low < high")
            if self.dist == "truncnorm" and self.sd <= 0:
                raise SpecError(f"{name}: need sd > 0")
        else:
            raise SpecError(f"{name}: unknown distribution {self.dist!r}")

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.dist == "bernoulli":
            return (rng.random(n) < self.q).astype(np.float64)
        if self.dist == "uniform":
            return rng.uniform(self.low, self.high, n)
        a = (self.low - self.mean) / self.sd
        b = (self.high - self.mean) / self.sd
        u = rng.random(n)
        return stats.truncnorm.ppf(u, a, b, loc=self.mean, scale=self.sd)

    def to_dict(self) -> dict:
        if self.dist == "bernoulli":
            return {"dist": "bernoulli", "q": self.q}
        if self.dist == "uniform":
            return {"dist": "uniform", "low": self.low, "high": self.high}
        return {"dist": "truncnorm", "mean": self.mean, "sd": self.sd,
                "low": self.low, "high": self.high}

    @classmethod
    def from_dict(cls, d: dict) -> "CovariateLaw":
        law = cls(**d)
        law.validate()
        return law


def default_covariate_law() -> dict:
    """Plausible marginals for the 15 standard covariates.

    Continuous bounds respect the dataset invariants (fever inclusion
    criterion, age at least one year); the male frequency matches the
    reported 58%.
    """
    law = {
        "temperature": CovariateLaw("truncnorm", mean=38.8, sd=0.8, low=38.0, high=42.0),
        "sick_days": CovariateLaw("uniform", low=0.0, high=15.0),
        "age": CovariateLaw("truncnorm", mean=18.0, sd=14.0, low=1.0, high=80.0),
        "rainfall": CovariateLaw("uniform", low=0.0, high=400.0),
        "sex": CovariateLaw("bernoulli", q=0.58),
    }
    for name in ds.BINARY_COVARIATES[1:]:
        law[name] = CovariateLaw("bernoulli", q=0.4)
    return law


@dataclass(frozen=True)
class GeneratorSpec:
    """Ground truth for synthetic data: size, coefficients, covariate laws, seed."""

    n: int
    beta_true: CoefMatrix
    covariate_law: dict = field(default_factory=default_covariate_law)
    seed: int = 0
    rainy_season: bool = False
    rainy_shift: float = 1.0

    def __post_init__(self):
        if self.n < 1:
            raise SpecError("n must be >= 1")
        for name, law in self.covariate_law.items():
            law.validate(name)
        # keep generated data ingestible: enforce hard dataset bounds
        hard_lower = {"temperature": 38.0, "age": 1.0, "sick_days": 0.0, "rainfall": 0.0}
        for name, lo in hard_lower.items():
            law = self.covariate_law.get(name)
            if law is not None and law.dist != "bernoulli" and law.low < lo:
                raise SpecError(f"{name}: lower bound {law.low} below minimum {lo}")
        if self.beta_true.p != len(self.covariate_law):
            raise SpecError(
                f"beta has {self.beta_true.p} covariates, law has {len(self.covariate_law)}")

    @property
    def names(self) -> tuple:
        return tuple(self.covariate_law)


def _blocks(n: int):
    start = 0
    b = 0
    while start < n:
        yield b, start, min(start + _BLOCK, n)
        b += 1
        start += _BLOCK


def sample_covariates(spec: GeneratorSpec) -> np.ndarray:
    """Draw n i.i.d. covariate rows; deterministic given spec.seed."""
    p = len(spec.covariate_law)
    X = np.empty((spec.n, p))
    for b, lo, hi in _blocks(spec.n):
        for j, (name, law) in enumerate(spec.covariate_law.items()):
            X[lo:hi, j] = law.draw(stream(spec.seed, 0, b, j), hi - lo)
    return X


def _draw_categorical(P: np.ndarray, seed: int) -> np.ndarray:
    y = np.empty(len(P), dtype=np.int64)
    cum = np.cumsum(P, axis=1)
    for b, lo, hi in _blocks(len(P)):
        u = stream(seed, 1, b).random(hi - lo)
        y[lo:hi] = (u[:, None] > cum[lo:hi]).sum(axis=1)
    return y


def sample_labels(X, beta: CoefMatrix, seed: int) -> np.ndarray:
    """Draw labels from the model's categorical class probabilities."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1] != beta.p:
        raise SpecError(f"X has {X.shape[1]} covariates, beta expects {beta.p}")
    return _draw_categorical(predict_proba(beta, X), seed)


def generate(spec: GeneratorSpec, mode: ds.Mode = ds.Mode.IGM) -> ds.Dataset:
    """Sample a full Dataset whose statuses are consistent with the labels.

    Malaria positivity corresponds to classes {2,3} and arboviral positivity
    to {1,3}; IgM carries the arboviral status and IgG mirrors it, so both
    case definitions re-encode to the same labels.

    With ``spec.rainy_season`` set, records whose rainfall falls in the upper
    half of its range are labelled under malaria/coinfection intercepts
    shifted by ``spec.rainy_shift``, mimicking seasonal co-circulation.
    """
    X = sample_covariates(spec)
    if spec.rainy_season:
        names = spec.names
        if "rainfall" not in names:
            raise SpecError("rainy_season coupling needs a 'rainfall' covariate")
        j = names.index("rainfall")
        law = spec.covariate_law["rainfall"]
        threshold = 0.5 * (law.low + law.high)
        shifted = spec.beta_true.beta.copy()
        shifted[1, 0] += spec.rainy_shift
        shifted[2, 0] += spec.rainy_shift
        P = predict_proba(spec.beta_true, X)
        high = X[:, j] > threshold
        if np.any(high):
            P[high] = predict_proba(CoefMatrix(shifted), X[high])
        y = _draw_categorical(P, spec.seed)
    else:
        y = sample_labels(X, spec.beta_true, spec.seed)
    malaria = np.isin(y, (2, 3)).astype(np.int64)
    arbo = np.isin(y, (1, 3)).astype(np.int64)
    return ds.Dataset(X, malaria, arbo, arbo.astype(np.float64), y, mode)


def load_beta_json(path_or_text: str, names=()) -> CoefMatrix:
    """Read a 3 x (p+1) coefficient matrix from a JSON file or JSON text."""
    try:
        payload = json.loads(path_or_text)
    except (json.JSONDecodeError, ValueError):
        with open(path_or_text, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    if isinstance(payload, dict):
        names = tuple(payload.get("covariate_names", names))
        payload = payload["beta"]
    return CoefMatrix(np.array(payload, dtype=np.float64), names)


def load_law_json(path_or_text: str) -> dict:
    """Read a covariate-law mapping from a JSON file or JSON text."""
    try:
        payload = json.loads(path_or_text)
    except (json.JSONDecodeError, ValueError):
        with open(path_or_text, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    return {name: CovariateLaw.from_dict(d) for name, d in payload.items()}
