import numpy as np
import pytest
from sklearn.base import clone

from mkdti import MKDTI
from mkdti.exceptions import DataError

SMALL = dict(num_layers=2, heads=2, layer_dims=(4, 4), input_dim=6, gammas=(0.5, 0.25), iterations=2,
             random_state=3)


def test_get_set_params_and_clone():
    est = MKDTI(**SMALL)
    params = est.get_params()
    assert params["heads"] == 2 and params["random_state"] == 3
    twin = clone(est)
    assert twin.get_params() == params
    est.set_params(lambda_d=0.5)
    assert est.to_config().dlaprls.lambda_d == 0.5


def test_config_round_trip():
    est = MKDTI(**SMALL)
    assert MKDTI.from_config(est.to_config()).get_params() == est.get_params()


def test_fit_predict(tiny):
    ds, kd, kt = tiny
    est = MKDTI(**SMALL).fit(ds.Y, drug_similarity=kd, target_similarity=kt)
    S = est.predict()
    assert S.shape == ds.Y.shape and len(est.loss_history_) == 2
    pairs = np.array([[0, 1], [5, 4]])
    np.testing.assert_array_equal(est.predict(pairs), S[[0, 5], [1, 4]])
    again = clone(est).fit(ds.Y, drug_similarity=kd, target_similarity=kt).predict()
    assert again.tobytes() == S.tobytes()
    np.testing.assert_array_equal(est.refresh_scores(), S)


def test_validation_errors(tiny):
    ds, kd, kt = tiny
    est = MKDTI(**SMALL)
    with pytest.raises(DataError):
        est.fit(ds.Y, drug_similarity=kd)
    with pytest.raises(DataError, match="0 or 1"):
        est.fit(ds.Y * 2, drug_similarity=kd, target_similarity=kt)
    with pytest.raises(DataError, match="symmetric"):
        est.fit(ds.Y, drug_similarity=kd + np.triu(np.ones_like(kd), 1), target_similarity=kt)
    with pytest.raises(DataError):
        est.fit(ds.Y, drug_similarity=kt, target_similarity=kt)


def test_predict_before_fit():
    from sklearn.exceptions import NotFittedError
    with pytest.raises(NotFittedError):
        MKDTI().predict()
