import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from roughvol import BlockSpotVariance, RoughVolatilityTest
from roughvol.core import GridSpec, TuningSpec, design_scenario
from roughvol.roughtest import run_test
from roughvol.simulate import simulate_panel


@pytest.fixture(scope="module")
def path():
    return simulate_panel(design_scenario("V3-J2", seed=8, grid=GridSpec(1200, 0)), 9).prices


def test_params_roundtrip():
    est = RoughVolatilityTest(frak_L=0.5, eta_scheme="lagged:3,5", alpha=0.1)
    params = est.get_params()
    assert params["frak_L"] == 0.5 and params["eta_scheme"] == "lagged:3,5"
    twin = clone(est)
    assert twin.get_params() == params
    twin.set_params(frak_L=0.95)
    assert twin.frak_L == 0.95 and est.frak_L == 0.5


def test_fit_matches_pipeline(path):
    est = RoughVolatilityTest(frak_L=0.75, alpha=0.05).fit(path)
    rep = run_test(path, 60, 48, TuningSpec(0.75), alphas=(0.05,))
    assert est.statistic_ == rep.statistic
    assert est.reject_ == rep.reject_at[0.05]
    assert est.n_days_ == 9
    assert est.decision_function() == est.statistic_


def test_array_input(path):
    a = RoughVolatilityTest(delta_n=path.delta_n).fit(path.as_array())
    b = RoughVolatilityTest().fit(path)
    assert a.statistic_ == b.statistic_


def test_rejects_nan(path):
    X = path.as_array().copy()
    X[2, 5] = np.nan
    with pytest.raises(ValueError):
        RoughVolatilityTest(delta_n=path.delta_n).fit(X)
    with pytest.raises(ValueError):
        RoughVolatilityTest().fit(np.zeros(10))


def test_not_fitted():
    with pytest.raises(NotFittedError):
        RoughVolatilityTest().decision_function()
    with pytest.raises(NotFittedError):
        BlockSpotVariance().transform(np.zeros((7, 300)))


def test_transformer(path):
    tr = BlockSpotVariance(delta_n=path.delta_n)
    Z = tr.fit_transform(path)
    assert Z.shape == (9, 20)
    assert np.isnan(Z[:5]).all() and np.isfinite(Z[5:]).all()
    with pytest.raises(ValueError):
        tr.transform(path.as_array()[:, :601])
