import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from acoustoptic import ErrorScalingModel, InternalDataRecovery, SpatialGrid, synthesize
from acoustoptic.acousto import MeasurementSet


@pytest.fixture
def grid():
    return SpatialGrid(32, 32)


def _trig_field(grid):
    x, y = grid.centers()
    return 1.0 + 0.4 * np.cos(2 * np.pi * x) + 0.3 * np.sin(2 * np.pi * (x + 2 * y))


def test_recovery_params_roundtrip():
    est = InternalDataRecovery(order=3, lx=2.0)
    assert est.get_params() == {"order": 3, "lx": 2.0, "ly": 1.0, "origin": (0.0, 0.0)}
    c = clone(est)
    assert c is not est and c.get_params() == est.get_params()
    assert est.set_params(order=5).order == 5


def test_recovery_reproduces_band_limited_field(grid):
    H = _trig_field(grid)
    est = InternalDataRecovery(order=2).fit(synthesize(H, grid, 2, 1e-2))
    assert est.order_ == 2
    assert np.allclose(est.grid_values(grid), H, atol=1e-10)
    pts = np.c_[grid.centers()[0].ravel(), grid.centers()[1].ravel()][:50]
    assert np.allclose(est.predict(pts), H.ravel()[:50], atol=1e-10)
    assert est.transform(pts).shape == (50, 1)
    assert est.metadata_["conjugate_defect"] < 1e-10


def test_recovery_not_fitted_and_bad_input(grid):
    est = InternalDataRecovery()
    with pytest.raises(NotFittedError):
        est.predict([[0.5, 0.5]])
    with pytest.raises(TypeError):
        est.fit(np.zeros((3, 5)))
    est.fit(synthesize(_trig_field(grid), grid, 1, 1e-2))
    with pytest.raises(ValueError, match="outside"):
        est.predict([[1.5, 0.5]])
    with pytest.raises(ValueError):
        est.predict([[0.5, np.nan]])
    with pytest.raises(ValueError, match="2 coordinates"):
        est.predict([[0.5, 0.5, 0.5]])


def test_recovery_rescales_box():
    grid = SpatialGrid(16, 8, lx=2.0, ly=1.0)
    ms = synthesize(np.ones(grid.shape), grid, 1, 1e-2)
    unit = MeasurementSet(ms.rows, ms.eps)  # box forgotten on re-ingest
    est = InternalDataRecovery(order=1, lx=2.0, ly=1.0).fit(unit)
    assert np.allclose(est.grid_values(grid), 1.0)


def _scaling_table():
    kn = np.array([1, .5, .25, .125])
    rows, y = [], []
    for h, a in [(0.25, 0.1), (0.5, 0.2)]:
        for k in kn:
            rows.append([k, h])
            y.append(np.exp(a / k + np.log(h)))
    return np.array(rows), np.array(y)


def test_scaling_model_fit_predict():
    X, y = _scaling_table()
    model = ErrorScalingModel().fit(X, y)
    assert set(model.kn_fits_) == {0.25, 0.5}
    assert model.kn_fits_[0.5].slope == pytest.approx(0.2)
    assert model.kn_fits_[0.25].r2 == pytest.approx(1.0)
    assert np.allclose(model.predict(X), y)
    assert model.score(X, y) == pytest.approx(1.0)
    assert model.h_fits_ == {}


def test_scaling_model_errors():
    X, y = _scaling_table()
    with pytest.raises(NotFittedError):
        ErrorScalingModel().predict(X)
    with pytest.raises(ValueError, match="no fitted line"):
        ErrorScalingModel().fit(X, y).predict([[0.5, 0.3]])
    with pytest.raises(ValueError, match="positive"):
        ErrorScalingModel().fit(-X, y)
    with pytest.raises(ValueError, match="errors"):
        ErrorScalingModel().fit(X, y[:-1])
    with pytest.raises(ValueError, match="degenerate"):
        ErrorScalingModel(min_points=5).fit(X, y)
    assert clone(ErrorScalingModel(min_points=3)).min_points == 3
