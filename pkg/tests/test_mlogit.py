"""Multinomial-logit likelihood, fitting, selection and tests."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from coinfect import mlogit, simulate
from coinfect.mlogit import CoefMatrix

from conftest import beta_matrix


# ------------------------------------------------------------ likelihood

def test_loglik_uniform_single_observation():
    assert mlogit.log_likelihood(CoefMatrix.zeros(1), np.zeros((1, 1)), [0]) \
        == pytest.approx(np.log(0.25), abs=1e-12)


def test_loglik_uniform_many_observations():
    n = 37
    ll = mlogit.log_likelihood(CoefMatrix.zeros(2), np.zeros((n, 2)), [0] * n)
    assert ll == pytest.approx(-n * np.log(4.0), abs=1e-10)


def test_loglik_single_covariate_log2_slope():
    beta = CoefMatrix(np.array([[0.0, np.log(2.0)], [0.0, 0.0], [0.0, 0.0]]))
    ll = mlogit.log_likelihood(beta, np.array([[1.0]]), [1])
    assert ll == pytest.approx(np.log(0.4), abs=1e-12)


def test_loglik_rejects_nonfinite_covariates():
    with pytest.raises(ValueError):
        mlogit.log_likelihood(CoefMatrix.zeros(1), np.array([[np.inf]]), [0])


# ------------------------------------------------------------ probabilities

def test_predict_proba_zero_beta_uniform():
    p = mlogit.predict_proba(CoefMatrix.zeros(2), np.array([3.0, -1.0]))
    assert np.allclose(p, 0.25, atol=1e-15)


def test_predict_proba_log2_slope():
    beta = CoefMatrix(np.array([[0.0, np.log(2.0)], [0.0, 0.0], [0.0, 0.0]]))
    p = mlogit.predict_proba(beta, np.array([1.0]))
    assert np.allclose(p, [0.2, 0.4, 0.2, 0.2], atol=1e-14)


def test_predict_proba_huge_intercept_stable():
    beta = CoefMatrix(beta_matrix({(3, 0): 50.0}, p=1))
    p = mlogit.predict_proba(beta, np.array([0.0]))
    assert np.isfinite(p).all()
    assert p[3] > 1.0 - 1e-15


@settings(max_examples=40, deadline=None)
@given(data=st.data())
def test_predict_proba_rows_sum_to_one(data):
    p = data.draw(st.integers(1, 4))
    entries = data.draw(st.lists(
        st.floats(-5.0, 5.0), min_size=3 * (p + 1), max_size=3 * (p + 1)))
    x = data.draw(st.lists(st.floats(-10.0, 10.0), min_size=p, max_size=p))
    beta = CoefMatrix(np.array(entries).reshape(3, p + 1))
    probs = mlogit.predict_proba(beta, np.array(x))
    assert probs.min() >= 0.0
    assert abs(probs.sum() - 1.0) < 1e-12


def test_dimension_mismatch_rejected():
    with pytest.raises(ValueError):
        mlogit.predict_proba(CoefMatrix.zeros(3), np.ones((2, 2)))


# ------------------------------------------------------------ score

def test_score_intercepts_on_balanced_sample():
    y = np.repeat([0, 1, 2, 3], [10, 14, 6, 10])
    X = np.zeros((40, 2))
    g = mlogit.score(CoefMatrix.zeros(2), X, y).reshape(3, 3)
    for k, nk in zip((1, 2, 3), (14, 6, 10)):
        assert g[k - 1, 0] == pytest.approx(nk - 10.0, abs=1e-9)


def test_score_vanishes_at_mle(quadrant_fit):
    result, _, X, y = quadrant_fit
    g = mlogit.score(result.coef, X, y)
    assert np.max(np.abs(g)) < 1e-6


def test_score_matches_finite_differences():
    rng = np.random.default_rng(3)
    X = rng.random((60, 2))
    y = rng.integers(0, 4, 60)
    theta = rng.normal(scale=0.5, size=9)
    g = mlogit.score(theta.reshape(3, 3), X, y)
    h = 1e-6
    for i in range(9):
        e = np.zeros(9)
        e[i] = h
        fd = (mlogit.log_likelihood((theta + e).reshape(3, 3), X, y)
              - mlogit.log_likelihood((theta - e).reshape(3, 3), X, y)) / (2 * h)
        assert g[i] == pytest.approx(fd, rel=1e-6, abs=1e-7)


def test_hessian_matches_finite_difference_of_score():
    rng = np.random.default_rng(4)
    X = rng.random((40, 2))
    y = rng.integers(0, 4, 40)
    theta = rng.normal(scale=0.3, size=9)
    H = mlogit.hessian(theta.reshape(3, 3), X)
    h = 1e-6
    for i in range(9):
        e = np.zeros(9)
        e[i] = h
        fd = (mlogit.score((theta + e).reshape(3, 3), X, y)
              - mlogit.score((theta - e).reshape(3, 3), X, y)) / (2 * h)
        assert np.allclose(H[:, i], fd, rtol=1e-4, atol=1e-6)


# ------------------------------------------------------------ fitting

def saturated_toy():
    X = np.concatenate([np.zeros(40), np.ones(50)])[:, None]
    y = np.concatenate([np.repeat([0, 1, 2, 3], 10),
                        np.repeat([0, 1, 2, 3], [10, 20, 10, 10])])
    return X, y


def test_fit_saturated_toy_matches_empirical_log_odds():
    X, y = saturated_toy()
    result = mlogit.fit(X, y)
    assert result.converged
    assert not result.separation_flag
    B = result.coef.beta
    assert np.allclose(B[:, 0], 0.0, atol=1e-6)          # intercepts
    assert B[0, 1] == pytest.approx(np.log(2.0), abs=1e-6)
    assert B[1, 1] == pytest.approx(0.0, abs=1e-6)
    assert B[2, 1] == pytest.approx(0.0, abs=1e-6)


def test_fit_recovers_truth_within_three_se():
    entries = {(1, 1): 0.8, (2, 2): -0.6, (3, 1): 0.4, (3, 2): 0.5}
    B_true = beta_matrix(entries, p=2)
    rng = np.random.default_rng(10)
    X = rng.random((20000, 2)) * 2.0 - 1.0
    y = simulate.sample_labels(X, CoefMatrix(B_true), seed=10)
    result = mlogit.fit(X, y)
    assert result.converged
    se = np.sqrt(np.diag(result.cov)).reshape(3, 3)
    assert np.all(np.abs(result.coef.beta - B_true) < 3.0 * se)


def test_fit_flags_separation_on_separable_data():
    x = np.concatenate([-1.0 - np.arange(20) / 20.0, 1.0 + np.arange(20) / 20.0])
    y = np.concatenate([np.zeros(20, int), np.ones(20, int)])
    result = mlogit.fit(x[:, None], y)
    assert result.separation_flag


def test_fit_flags_absent_class():
    rng = np.random.default_rng(1)
    X = rng.random((100, 1))
    y = rng.integers(0, 3, 100)          # class 3 never appears
    result = mlogit.fit(X, y)
    assert 3 in result.absent_classes
    assert result.separation_flag


def test_fit_deterministic_bitwise():
    X, y = saturated_toy()
    a = mlogit.fit(X, y)
    b = mlogit.fit(X, y)
    assert a.coef.beta.tobytes() == b.coef.beta.tobytes()
    assert a.cov.tobytes() == b.cov.tobytes()
    assert a.loglik == b.loglik


def test_fit_result_json_roundtrip():
    X, y = saturated_toy()
    result = mlogit.fit(X, y, names=("x0",))
    back = mlogit.FitResult.from_json(result.to_json())
    assert np.array_equal(back.coef.beta, result.coef.beta)
    assert np.array_equal(back.cov, result.cov)
    assert back.loglik == result.loglik
    assert back.converged == result.converged


def test_cov_symmetric_psd(quadrant_fit):
    result, _, _, _ = quadrant_fit
    assert np.allclose(result.cov, result.cov.T, atol=1e-8)
    assert np.linalg.eigvalsh(result.cov).min() > -1e-10
    assert result.loglik <= 0.0


# ------------------------------------------------------------ LR test / AIC

def test_lr_identical_models():
    X, y = saturated_toy()
    f = mlogit.fit(X, y)
    res = mlogit.lr_test(f, f)
    assert res.statistic == 0.0
    assert res.p_value == 1.0


def test_lr_power_on_strong_covariate():
    entries = {(1, 1): 1.0, (2, 1): 1.0, (3, 1): 1.0}
    rng = np.random.default_rng(2)
    X = rng.random((5000, 2)) * 2.0 - 1.0
    y = simulate.sample_labels(X, CoefMatrix(beta_matrix(entries, p=2)), seed=2)
    full = mlogit.fit(X, y)
    reduced = mlogit.fit(X[:, 1:], y)
    res = mlogit.lr_test(full, reduced)
    assert res.dof == 3
    assert res.p_value < 0.001


def test_lr_null_pvalues_uniform():
    # dropping a covariate with zero true effect: p-values ~ Uniform(0, 1)
    entries = {(1, 1): 0.5, (2, 1): -0.5}
    beta = CoefMatrix(beta_matrix(entries, p=2))
    pvals = []
    for rep in range(500):
        rng = np.random.default_rng(1000 + rep)
        X = rng.random((400, 2)) * 2.0 - 1.0
        y = simulate.sample_labels(X, beta, seed=1000 + rep)
        full = mlogit.fit(X, y)
        reduced = mlogit.fit(X[:, :1], y)        # second covariate is inert
        pvals.append(mlogit.lr_test(full, reduced).p_value)
    assert stats.kstest(pvals, "uniform").pvalue > 0.01


def test_lr_rejects_non_nested_likelihoods():
    X, y = saturated_toy()
    good = mlogit.fit(X, y)
    worse = mlogit.FitResult(
        coef=CoefMatrix.zeros(2), loglik=good.loglik + 1.0,
        cov=np.eye(9), n_iter=1, converged=True, separation_flag=False)
    with pytest.raises(ValueError):
        mlogit.lr_test(good, worse)


def test_aic_formula():
    X, y = saturated_toy()
    f = mlogit.fit(X, y)
    assert mlogit.aic(f) == pytest.approx(-2.0 * f.loglik + 2.0 * 3 * 2)


# ------------------------------------------------------------ stepwise

def test_stepwise_keeps_active_covariates():
    entries = {(1, 1): 1.2, (3, 2): -1.2}
    rng = np.random.default_rng(5)
    X = rng.random((3000, 6)) * 2.0 - 1.0
    y = simulate.sample_labels(X, CoefMatrix(beta_matrix(entries, p=6)), seed=5)
    selected, result = mlogit.stepwise_aic(X, y)
    assert {0, 1} <= set(selected)
    assert result.coef.p == len(selected)


def test_stepwise_prunes_pure_noise():
    sizes = []
    for rep in range(10):
        rng = np.random.default_rng(200 + rep)
        X = rng.random((2000, 6)) * 2.0 - 1.0
        y = simulate.sample_labels(X, CoefMatrix.zeros(6), seed=200 + rep)
        selected, _ = mlogit.stepwise_aic(X, y)
        sizes.append(len(selected))
    assert np.median(sizes) <= 2


def test_stepwise_drops_duplicated_column():
    entries = {(1, 1): 1.0, (2, 1): -1.0}
    rng = np.random.default_rng(6)
    x = rng.random((2000, 1)) * 2.0 - 1.0
    y = simulate.sample_labels(x, CoefMatrix(beta_matrix(entries, p=1)), seed=6)
    X = np.hstack([x, x])                      # identical duplicate column
    selected, _ = mlogit.stepwise_aic(X, y)
    assert len(selected) >= 1
    assert selected in ([0], [1])


# ------------------------------------------------------------ Wald test

def test_wald_zero_contrast():
    B = beta_matrix({(1, 0): 0.4, (2, 1): 0.7}, p=1)
    B[2] = B[0] + B[1]                          # b3 = b1 + b2 exactly
    f = mlogit.FitResult(coef=CoefMatrix(B), loglik=-1.0, cov=np.eye(6),
                         n_iter=1, converged=True, separation_flag=False)
    res = mlogit.wald_independence(f)
    assert res.statistic == 0.0
    assert res.p_value == 1.0
    assert res.dof == 2
    assert np.allclose(res.h, 0.0)


def test_wald_detects_dependence(quadrant_fit):
    result, _, _, _ = quadrant_fit
    res = mlogit.wald_independence(result)
    assert res.dof == 4
    assert 0.0 <= res.p_value <= 1.0
    assert res.statistic >= 0.0


def test_wald_singular_covariance_errors():
    f = mlogit.FitResult(coef=CoefMatrix.zeros(1), loglik=-1.0,
                         cov=np.zeros((6, 6)), n_iter=1, converged=True,
                         separation_flag=False)
    with pytest.raises(mlogit.FitError):
        mlogit.wald_independence(f)
