"""Four-class multinomial logit: likelihood, Newton fitting, selection, tests.

The model has reference class 0 and class-specific coefficient vectors
b_k in R^(p+1) for k = 1, 2, 3 (intercept first), so that

    log P(Y=k | x) / P(Y=0 | x) = <x, b_k>,     x = (1, x_1, ..., x_p).

All linear algebra runs on the stacked parameter vector (b_1, b_2, b_3)
of length 3(p+1).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import logsumexp

__all__ = [
    "CoefMatrix",
    "FitResult",
    "WaldResult",
    "LRTestResult",
    "FitError",
    "design_matrix",
    "predict_proba",
    "log_likelihood",
    "score",
    "hessian",
    "fit",
    "lr_test",
    "stepwise_aic",
    "wald_independence",
]

N_ALT = 3  # non-reference classes 1, 2, 3
SEPARATION_BOUND = 15.0


class FitError(RuntimeError):
    """Maximum-likelihood fitting failed irrecoverably."""


@dataclass(frozen=True)
class CoefMatrix:
    """Coefficients beta[k-1, j] for class k in {1,2,3}, column j=0 intercept."""

    beta: np.ndarray
    covariate_names: tuple = ()

    def __post_init__(self):
        beta = np.ascontiguousarray(self.beta, dtype=np.float64)
        if beta.ndim != 2 or beta.shape[0] != N_ALT:
            raise ValueError("beta must have shape (3, p+1)")
        if not np.all(np.isfinite(beta)):
            raise ValueError("beta entries must be finite")
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        if self.covariate_names and len(self.covariate_names) != beta.shape[1] - 1:
            raise ValueError("covariate_names length must be p")
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))

    @property
    def p(self) -> int:
        return self.beta.shape[1] - 1

    def stacked(self) -> np.ndarray:
        return self.beta.reshape(-1)

    @classmethod
    def from_stacked(cls, theta, p: int, names=()) -> "CoefMatrix":
        return cls(np.asarray(theta, dtype=np.float64).reshape(N_ALT, p + 1), names)

    @classmethod
    def zeros(cls, p: int, names=()) -> "CoefMatrix":
        return cls(np.zeros((N_ALT, p + 1)), names)


@dataclass
class FitResult:
    """Maximum-likelihood fit with observed-information covariance."""

    coef: CoefMatrix
    loglik: float
    cov: np.ndarray
    n_iter: int
    converged: bool
    separation_flag: bool
    absent_classes: tuple = ()

    def to_dict(self) -> dict:
        return {
            "covariate_names": list(self.coef.covariate_names),
            "beta": self.coef.beta.tolist(),
            "loglik": self.loglik,
            "cov": self.cov.tolist(),
            "n_iter": self.n_iter,
            "converged": self.converged,
            "separation_flag": self.separation_flag,
            "absent_classes": list(self.absent_classes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        return cls(
            coef=CoefMatrix(np.array(d["beta"]), tuple(d.get("covariate_names", ()))),
            loglik=float(d["loglik"]),
            cov=np.array(d["cov"], dtype=np.float64),
            n_iter=int(d.get("n_iter", 0)),
            converged=bool(d.get("converged", True)),
            separation_flag=bool(d.get("separation_flag", False)),
            absent_classes=tuple(d.get("absent_classes", ())),
        )

    @classmethod
    def from_json(cls, text: str) -> "FitResult":
        return cls.from_dict(json.loads(text))


@dataclass
class WaldResult:
    """Wald test of infection independence H0: b_3 = b_1 + b_2."""

    statistic: float
    dof: int
    p_value: float
    h: np.ndarray

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "dof": self.dof,
            "p_value": self.p_value,
            "h": self.h.tolist(),
        }


@dataclass
class LRTestResult:
    statistic: float
    dof: int
    p_value: float


def design_matrix(X) -> np.ndarray:
    """Prepend the intercept column of ones."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if not np.all(np.isfinite(X)):
        raise ValueError("covariates must be finite")
    return np.hstack([np.ones((X.shape[0], 1)), X])


def _log_probs(beta: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """Row-wise log class probabilities, (n, 4), log-sum-exp stabilized."""
    eta = Z @ beta.T                           # (n, 3)
    logits = np.hstack([np.zeros((Z.shape[0], 1)), eta])
    return logits - logsumexp(logits, axis=1, keepdims=True)


def predict_proba(beta, X) -> np.ndarray:
    """Class probabilities (pi_0, ..., pi_3) for covariate rows X (no intercept).

    Accepts a CoefMatrix or a raw (3, p+1) array; a single covariate vector
    yields a length-4 probability vector.
    """
    B = beta.beta if isinstance(beta, CoefMatrix) else np.asarray(beta, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    Z = design_matrix(X)
    if Z.shape[1] != B.shape[1]:
        raise ValueError(
            f"dimension mismatch: design has {Z.shape[1]} columns, beta has {B.shape[1]}")
    P = np.exp(_log_probs(B, Z))
    return P[0] if single else P


def log_likelihood(beta, X, y) -> float:
    """Multinomial log-likelihood of labels y under coefficients beta."""
    B = beta.beta if isinstance(beta, CoefMatrix) else np.asarray(beta, dtype=np.float64)
    Z = design_matrix(X)
    y = np.asarray(y, dtype=np.int64)
    logP = _log_probs(B, Z)
    return float(logP[np.arange(len(y)), y].sum())


def _score_from_design(B, Z, y):
    P = np.exp(_log_probs(B, Z))
    Y = np.zeros((len(y), N_ALT))
    for k in range(1, 4):
        Y[:, k - 1] = y == k
    G = (Y - P[:, 1:]).T @ Z                  # (3, p+1)
    return G.reshape(-1), P


def score(beta, X, y) -> np.ndarray:
    """Gradient of the log-likelihood in stacked (b_1, b_2, b_3) order."""
    B = beta.beta if isinstance(beta, CoefMatrix) else np.asarray(beta, dtype=np.float64)
    Z = design_matrix(X)
    g, _ = _score_from_design(B, Z, np.asarray(y, dtype=np.int64))
    return g


def _hessian_from_design(P, Z):
    """Hessian of the log-likelihood (negative definite), 3(p+1) square."""
    d = Z.shape[1]
    H = np.empty((N_ALT * d, N_ALT * d))
    for k in range(N_ALT):
        pk = P[:, k + 1]
        for l in range(k, N_ALT):
            w = pk * ((1.0 if k == l else 0.0) - P[:, l + 1])
            block = -(Z * w[:, None]).T @ Z
            H[k * d:(k + 1) * d, l * d:(l + 1) * d] = block
            if l != k:
                H[l * d:(l + 1) * d, k * d:(k + 1) * d] = block.T
    return H


def hessian(beta, X, y=None) -> np.ndarray:
    B = beta.beta if isinstance(beta, CoefMatrix) else np.asarray(beta, dtype=np.float64)
    Z = design_matrix(X)
    P = np.exp(_log_probs(B, Z))
    return _hessian_from_design(P, Z)


def fit(X, y, names=(), tol=1e-8, max_iter=100, ridge=1e-8,
        start: CoefMatrix | None = None) -> FitResult:
    """Newton maximum-likelihood fit with step-halving safeguard.

    A small ridge is always added to the negative Hessian, both for
    conditioning and so the covariance stays defined under separation.
    Separation or an absent class is flagged, never fatal: downstream
    ensemble analyses need every sub-sample fit, flagged or not.
    """
    Z = design_matrix(X)
    y = np.asarray(y, dtype=np.int64)
    n, d = Z.shape
    p = d - 1
    present = np.unique(y)
    absent = tuple(int(k) for k in range(4) if k not in present)

    B = start.beta.copy() if start is not None else np.zeros((N_ALT, d))
    theta = B.reshape(-1).copy()
    ll = log_likelihood(theta.reshape(N_ALT, d), X, y)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        Bc = theta.reshape(N_ALT, d)
        g, P = _score_from_design(Bc, Z, y)
        if np.max(np.abs(g)) < tol:
            converged = True
            break
        H = _hessian_from_design(P, Z)
        negH = -H + ridge * np.eye(N_ALT * d)
        try:
            step = np.linalg.solve(negH, g)
        except np.linalg.LinAlgError as exc:
            raise FitError("Hessian singular despite ridge") from exc
        # step halving: accept the largest step in {1, 1/2, ...} that does
        # not decrease the log-likelihood
        scale = 1.0
        for _ in range(30):
            cand = theta + scale * step
            ll_new = log_likelihood(cand.reshape(N_ALT, d), X, y)
            if ll_new >= ll - 1e-12:
                break
            scale *= 0.5
        theta = theta + scale * step
        ll = log_likelihood(theta.reshape(N_ALT, d), X, y)
        if scale * np.linalg.norm(step) < tol:
            converged = True
            break

    B = theta.reshape(N_ALT, d)
    _, P = _score_from_design(B, Z, y)
    negH = -_hessian_from_design(P, Z) + ridge * np.eye(N_ALT * d)
    try:
        cov = np.linalg.inv(negH)
    except np.linalg.LinAlgError as exc:
        raise FitError("information matrix singular at the optimum") from exc
    cov = 0.5 * (cov + cov.T)
    separation = bool(np.any(np.abs(B) > SEPARATION_BOUND)) or bool(absent)
    return FitResult(
        coef=CoefMatrix(B, tuple(names)),
        loglik=float(ll),
        cov=cov,
        n_iter=it,
        converged=converged,
        separation_flag=separation,
        absent_classes=absent,
    )


def lr_test(fit_full: FitResult, fit_reduced: FitResult) -> LRTestResult:
    """Likelihood-ratio test of a nested sub-model (3 dof per dropped covariate)."""
    stat = 2.0 * (fit_full.loglik - fit_reduced.loglik)
    if stat < -1e-8:
        raise ValueError(
            "reduced model has higher likelihood than the full model; "
            "models are not nested or a fit did not converge")
    stat = max(stat, 0.0)
    dof = N_ALT * (fit_full.coef.p - fit_reduced.coef.p)
    if dof == 0:
        return LRTestResult(stat, 0, 1.0)
    p_value = float(stats.chi2.sf(stat, dof))
    return LRTestResult(stat, dof, p_value)


def aic(result: FitResult) -> float:
    """AIC with 3(q+1) parameters for q covariates (intercepts included)."""
    return -2.0 * result.loglik + 2.0 * N_ALT * (result.coef.p + 1)


def stepwise_aic(X, y, names=(), tol=1e-8, max_iter=100, ridge=1e-8):
    """Backward stepwise elimination by AIC.

    Starts from the full model; at each step removes the covariate whose
    removal lowers AIC most, stopping when no removal improves it.  Ties
    break by covariate order, so the procedure is deterministic.
    Returns (selected covariate indices, FitResult of the final model).
    """
    X = np.asarray(X, dtype=np.float64)
    p = X.shape[1]
    names = tuple(names) if names else tuple(f"x{j}" for j in range(p))
    active = list(range(p))
    current = fit(X, y, names, tol=tol, max_iter=max_iter, ridge=ridge)
    current_aic = aic(current)
    while len(active) > 0:
        best_j, best_fit, best_aic = None, None, current_aic
        for pos, j in enumerate(active):
            trial = [a for a in active if a != j]
            warm = _drop_column_start(current.coef, pos)
            f = fit(X[:, trial], y, tuple(names[a] for a in trial),
                    tol=tol, max_iter=max_iter, ridge=ridge, start=warm)
            a_val = aic(f)
            if a_val < best_aic - 1e-10:
                best_j, best_fit, best_aic = j, f, a_val
        if best_j is None:
            break
        active = [a for a in active if a != best_j]
        current, current_aic = best_fit, best_aic
    return active, current


def _drop_column_start(coef: CoefMatrix, pos: int) -> CoefMatrix:
    """Warm start for a sub-model: delete one covariate column (pos is 0-based
    among covariates, i.e. design column pos+1)."""
    B = np.delete(coef.beta, pos + 1, axis=1)
    return CoefMatrix(B)


def wald_independence(result: FitResult) -> WaldResult:
    """Wald test of H0: b_3 = b_1 + b_2 (independence of the two infections).

    h = b3_hat - b1_hat - b2_hat, Sigma = D V D^T with block design
    D = (-I, -I, I); W = h^T Sigma^{-1} h ~ chi-square(p+1) under H0.
    """
    d = result.coef.p + 1
    V = np.asarray(result.cov, dtype=np.float64)
    if V.shape != (N_ALT * d, N_ALT * d) or not np.all(np.isfinite(V)):
        raise ValueError("fit covariance unavailable or non-finite")
    b1, b2, b3 = result.coef.beta
    h = b3 - b1 - b2
    D = np.hstack([-np.eye(d), -np.eye(d), np.eye(d)])
    Sigma = D @ V @ D.T
    cond = np.linalg.cond(Sigma)
    if not np.isfinite(cond) or cond > 1e12:
        raise FitError(f"contrast covariance ill-conditioned (cond={cond:.3e})")
    W = float(h @ np.linalg.solve(Sigma, h))
    W = max(W, 0.0)
    return WaldResult(W, d, float(stats.chi2.sf(W, d)), h)
