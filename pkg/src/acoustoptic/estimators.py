"""Estimator-style wrappers for the data-fitting steps of the pipeline."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .acousto import MeasurementSet, evaluate_series, fourier_coefficients
from .reconstruct import fit_scalings
from .validation import check_points, check_scaling_data


class InternalDataRecovery(TransformerMixin, BaseEstimator):
    """Fourier model of ``H`` fitted to a :class:`MeasurementSet`.

    ``transform`` evaluates the truncated series at arbitrary points of the
    box ``[origin, origin + (lx, ly)]``.
    """

    def __init__(self, order=None, lx=1.0, ly=1.0, origin=(0.0, 0.0)):
        self.order = order
        self.lx = lx
        self.ly = ly
        self.origin = origin

    def fit(self, X: MeasurementSet, y=None):
        if not isinstance(X, MeasurementSet):
            raise TypeError(f"expected a MeasurementSet, got {type(X).__name__}")
        if (X.lx, X.ly) != (self.lx, self.ly):
            X = MeasurementSet(X.rows, X.eps, self.lx, self.ly)
        self.coefficients_, self.metadata_ = fourier_coefficients(X, self.order)
        self.order_ = self.metadata_["order"]
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "coefficients_")
        X = check_points(X)
        x0, y0 = self.origin
        if np.any((X[:, 0] < x0) | (X[:, 0] > x0 + self.lx) | (X[:, 1] < y0) | (X[:, 1] > y0 + self.ly)):
            raise ValueError("points lie outside the measurement box")
        kk = np.arange(-self.order_, self.order_ + 1)
        ex = np.exp(2j * np.pi * np.outer(X[:, 0] - x0, kk) / self.lx)
        ey = np.exp(2j * np.pi * np.outer(X[:, 1] - y0, kk) / self.ly)
        vals = np.einsum("nk,kl,nl->n", ex, self.coefficients_, ey) / (self.lx * self.ly)
        return vals.real

    def transform(self, X) -> np.ndarray:
        return self.predict(X)[:, None]

    def grid_values(self, grid) -> np.ndarray:
        check_is_fitted(self, "coefficients_")
        return evaluate_series(self.coefficients_, grid.xc, grid.yc, self.lx, self.ly, self.origin).real


class ErrorScalingModel(RegressorMixin, BaseEstimator):
    """Per-``h`` log-linear model ``log E = a/Kn + b`` of the relative error.

    ``X`` rows are ``(kn, h)``.  ``predict`` only serves ``h`` values seen in
    ``fit``.  The companion fits of ``E`` against ``h`` per ``Kn`` are exposed
    as ``h_fits_``.
    """

    def __init__(self, min_points=4):
        self.min_points = min_points

    def fit(self, X, y):
        X, y = check_scaling_data(X, y)
        fits = fit_scalings(X[:, 0], X[:, 1], y, self.min_points)
        self.kn_fits_ = fits["log_error_vs_inv_kn"]
        self.h_fits_ = fits["error_vs_h"]
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "kn_fits_")
        X, _ = check_scaling_data(X, np.zeros(len(X)))
        out = np.empty(len(X))
        for i, (kn, h) in enumerate(X):
            fit = self.kn_fits_.get(float(h))
            if fit is None:
                raise ValueError(f"no fitted line for h={h:.6g}; known: {sorted(self.kn_fits_)}")
            out[i] = np.exp(fit.intercept + fit.slope / kn)
        return out
