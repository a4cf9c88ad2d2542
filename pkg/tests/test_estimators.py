import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from stokes_lattice import (ChannelArrayFlow, HalfPlaneArrayFlow, ProximityError, build_channel_solution,
                            evaluate)

X = np.array([[0.5, 0.4], [2.0, 1.5], [5.0, 1.0]])


def test_predict_matches_functional_core():
    est = ChannelArrayFlow(kind="stresslet", mu=1 + 1j, z0=complex(3.0, 0.8), height_h=2.0).fit()
    sol = build_channel_solution("stresslet", 1 + 1j, complex(3.0, 0.8), 2.0)
    w = evaluate(sol.parts, X[:, 0] + 1j * X[:, 1]).velocity
    assert np.allclose(est.predict(X), np.column_stack([w.real, -w.imag]), rtol=0, atol=1e-15)
    out = est.transform(X)
    assert out.shape == (3, 4)
    assert np.array_equal(out[:, :2], est.predict(X))


def test_physical_scaling_is_consistent():
    # the same physical flow in units twice as large: velocity unchanged at scaled points,
    # p/eta and omega halved; the stresslet strength carries one power of length
    base = ChannelArrayFlow(kind="stresslet", mu=1.0, z0=complex(3.0, 0.8), height_h=2.0).fit()
    big = ChannelArrayFlow(kind="stresslet", mu=2.0, z0=complex(6.0, 1.6), period_l=4 * math.pi,
                           height_h=4.0).fit()
    a, b = base.transform(X), big.transform(2 * X)
    assert np.allclose(b[:, :2], a[:, :2], rtol=1e-12, atol=1e-14)
    assert np.allclose(b[:, 2:], 0.5 * a[:, 2:], rtol=1e-12, atol=1e-14)


def test_sklearn_contract():
    est = ChannelArrayFlow(kind="stokeslet", height_h=3.0)
    params = est.get_params()
    assert params["height_h"] == 3.0 and params["kind"] == "stokeslet"
    twin = clone(est).set_params(height_h=2.5)
    assert twin.height_h == 2.5 and est.height_h == 3.0
    with pytest.raises(NotFittedError):
        est.predict(X)
    est.fit(X)
    assert est.n_features_in_ == 2
    pipe = make_pipeline(HalfPlaneArrayFlow(kind="source_dipole", z0=complex(1, 1)))
    assert pipe.fit(X).transform(X).shape == (3, 4)


def test_input_validation():
    est = HalfPlaneArrayFlow().fit()
    with pytest.raises(ValueError):
        est.predict(np.ones((2, 3)))
    with pytest.raises(ValueError):
        est.predict([[np.nan, 1.0]])
    with pytest.raises(ProximityError):
        est.predict([[math.pi, 1.0]])
