"""Synthetic data generation against the known model truth."""

import json

import numpy as np
import pytest

from coinfect import dataset as ds
from coinfect import mlogit, simulate
from coinfect.mlogit import CoefMatrix

from conftest import beta_matrix


def spec_with(n, entries=None, seed=0, **kw):
    law = simulate.default_covariate_law()
    beta = CoefMatrix(beta_matrix(entries, p=len(law)), tuple(law))
    return simulate.GeneratorSpec(n, beta, law, seed, **kw)


# ----------------------------------------------------------- covariates

def test_degenerate_bernoulli_all_ones():
    law = {name: simulate.CovariateLaw("bernoulli", q=1.0)
           for name in ("sex", "headache", "cough")}
    spec = simulate.GeneratorSpec(1, CoefMatrix.zeros(3, tuple(law)), law, seed=3)
    X = simulate.sample_covariates(spec)
    assert X.shape == (1, 3)
    assert np.all(X == 1.0)


def test_sex_frequency_matches_law():
    X = simulate.sample_covariates(spec_with(10000, seed=11))
    j = list(simulate.default_covariate_law()).index("sex")
    assert abs(X[:, j].mean() - 0.58) < 0.02


def test_covariates_deterministic_and_within_bounds():
    spec = spec_with(500, seed=5)
    X1 = simulate.sample_covariates(spec)
    X2 = simulate.sample_covariates(spec)
    assert np.array_equal(X1, X2)
    names = list(spec.covariate_law)
    assert X1[:, names.index("temperature")].min() >= 38.0
    assert X1[:, names.index("age")].min() >= 1.0
    assert X1[:, names.index("rainfall")].min() >= 0.0


def test_prefix_stability_across_sample_sizes():
    # block-wise substreams: a longer run extends a shorter one
    X_small = simulate.sample_covariates(spec_with(5000, seed=9))
    X_large = simulate.sample_covariates(spec_with(9000, seed=9))
    assert np.array_equal(X_small, X_large[:5000])


def test_invalid_law_bounds_rejected():
    law = simulate.default_covariate_law()
    law["temperature"] = simulate.CovariateLaw("uniform", low=36.0, high=41.0)
    with pytest.raises(simulate.SpecError):
        simulate.GeneratorSpec(10, CoefMatrix.zeros(len(law), tuple(law)), law)


def test_bad_bernoulli_parameter_rejected():
    with pytest.raises(simulate.SpecError):
        simulate.CovariateLaw("bernoulli", q=1.5).validate("sex")


# ----------------------------------------------------------- labels

def test_zero_beta_gives_uniform_classes():
    spec = spec_with(10000, seed=2)
    X = simulate.sample_covariates(spec)
    y = simulate.sample_labels(X, spec.beta_true, seed=2)
    freq = np.bincount(y, minlength=4) / len(y)
    assert np.all(np.abs(freq - 0.25) < 0.02)


def test_huge_intercept_forces_single_class():
    spec = spec_with(200, entries={(3, 0): 20.0}, seed=4)
    X = simulate.sample_covariates(spec)
    y = simulate.sample_labels(X, spec.beta_true, seed=4)
    assert np.all(y == 3)


def test_single_binary_covariate_frequencies():
    # odds (1, 2, 1, 1)/5 at x = 1 when the class-1 slope is ln 2
    X = np.ones((10000, 1))
    beta = CoefMatrix(np.array([[0.0, np.log(2.0)], [0.0, 0.0], [0.0, 0.0]]))
    y = simulate.sample_labels(X, beta, seed=8)
    freq = np.bincount(y, minlength=4) / len(y)
    assert np.all(np.abs(freq - np.array([0.2, 0.4, 0.2, 0.2])) < 0.02)


def test_label_dimension_mismatch_rejected():
    with pytest.raises(simulate.SpecError):
        simulate.sample_labels(np.ones((5, 2)), CoefMatrix.zeros(3), seed=0)


def test_label_frequencies_converge_to_model_probabilities():
    entries = {(1, 0): 0.3, (1, 2): 0.5, (2, 3): -0.4, (3, 1): 0.2, (3, 0): -0.2}
    spec = spec_with(50000, entries=entries, seed=6)
    X = simulate.sample_covariates(spec)
    y = simulate.sample_labels(X, spec.beta_true, seed=6)
    freq = np.bincount(y, minlength=4) / len(y)
    target = mlogit.predict_proba(spec.beta_true, X).mean(axis=0)
    assert np.max(np.abs(freq - target)) < 0.01


# ----------------------------------------------------------- full datasets

def test_generate_statuses_consistent_with_labels():
    data = simulate.generate(spec_with(400, entries={(2, 0): 0.5}, seed=12))
    assert np.array_equal(data.malaria, np.isin(data.y, (2, 3)).astype(int))
    assert np.array_equal(data.igm, np.isin(data.y, (1, 3)).astype(int))
    for i in range(0, len(data), 37):
        assert ds.encode_response(data.status(i), data.mode) == data.y[i]


def test_generate_roundtrips_through_csv():
    data = simulate.generate(spec_with(60, seed=13))
    back = ds.ingest_csv(ds.serialize_csv(data), ds.Mode.IGM)
    assert np.array_equal(back.X, data.X)
    assert np.array_equal(back.y, data.y)


def test_rainy_season_raises_malaria_share_in_wet_records():
    spec = spec_with(20000, seed=14, rainy_season=True, rainy_shift=1.5)
    data = simulate.generate(spec)
    j = list(spec.covariate_law).index("rainfall")
    wet = data.X[:, j] > 200.0
    wet_rate = data.malaria[wet].mean()
    dry_rate = data.malaria[~wet].mean()
    assert wet_rate > dry_rate + 0.1


def test_json_loaders_accept_text_and_files(tmp_path):
    law = simulate.default_covariate_law()
    law_payload = json.dumps({k: v.to_dict() for k, v in law.items()})
    assert simulate.load_law_json(law_payload).keys() == law.keys()
    beta = beta_matrix({(1, 1): 0.7}, p=len(law))
    beta_payload = json.dumps({"beta": beta.tolist(),
                               "covariate_names": list(law)})
    loaded = simulate.load_beta_json(beta_payload)
    assert np.array_equal(loaded.beta, beta)
    law_path = tmp_path / "law.json"
    law_path.write_text(law_payload)
    beta_path = tmp_path / "beta.json"
    beta_path.write_text(beta_payload)
    assert simulate.load_law_json(str(law_path)).keys() == law.keys()
    assert np.array_equal(simulate.load_beta_json(str(beta_path)).beta, beta)
