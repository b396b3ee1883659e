"""scikit-learn style wrappers around detector calibration and filtering.

Thin adapters for use in sklearn pipelines; the functional API in
``detector`` and ``simulator`` is the primary interface.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .detector import calibrate_tau
from .dynamics import PhysicalParams
from .errors import CalibrationError
from .simulator import propagate


class DetectorCalibration(ClassifierMixin, BaseEstimator):
    """Fit (delta_v, tau) from labelled eigenstate records.

    ``X`` holds per-sample voltages, one record per row; ``y`` is 0 for
    records prepared in |0> (z = +1) and 1 for |1>. After fitting, the
    estimator classifies new records by the likelihood ratio of their
    summed signal, which is the optimal discriminator for this model.

    Parameters
    ----------
    dt : float
        Sampling interval in seconds.
    steps : sequence of int, optional
        Integration lengths used for the S = 4 t / tau regression.
    """

    def __init__(self, dt: float = 16e-9, steps=None):
        self.dt = dt
        self.steps = steps

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise CalibrationError("X must be (n_records, n_samples) with one label per record")
        labels = set(np.unique(y).tolist())
        if labels != {0, 1}:
            raise CalibrationError("y must contain both labels 0 and 1")
        cal = calibrate_tau(X[y == 0], X[y == 1], self.dt, self.steps)
        self.calibration_ = cal
        self.delta_v_ = cal.delta_v
        self.tau_ = cal.tau
        # offset of the midpoint between the two peaks
        self.offset_ = float(0.5 * (X[y == 0].mean() + X[y == 1].mean()))
        self.classes_ = np.array([0, 1])
        return self

    def decision_function(self, X):
        """Log-likelihood ratio ln P(|1>) - ln P(|0>) for each record."""
        check_is_fitted(self, "tau_")
        X = np.asarray(X, dtype=float)
        r = 2.0 * (X - self.offset_) / self.delta_v_
        if self.tau_ == 0.0:
            return np.where(r.sum(axis=1) > 0, -np.inf, np.inf)
        return -2.0 * r.sum(axis=1) * self.dt / self.tau_

    def predict_proba(self, X):
        llr = np.clip(self.decision_function(X), -700, 700)
        p1 = 1.0 / (1.0 + np.exp(-llr))
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(int)


class StateFilter(TransformerMixin, BaseEstimator):
    """Map readout records (rows of dimensionless r) to filtered states.

    ``transform`` returns ``[x_0 .. x_m, z_0 .. z_m]`` per row; use
    ``transform_states`` for the (n, m + 1, 2) view.
    """

    def __init__(self, omega_hz: float = 1.08e6, tau: float = 315e-9, gamma: float = 3.85e6,
                 dt: float = 16e-9, x0: float = 0.88, z0: float = 0.0, scheme: str = "symmetric"):
        self.omega_hz = omega_hz
        self.tau = tau
        self.gamma = gamma
        self.dt = dt
        self.x0 = x0
        self.z0 = z0
        self.scheme = scheme

    def fit(self, X=None, y=None):
        self.params_ = PhysicalParams.from_lab(self.omega_hz, self.tau, self.gamma, dt=self.dt,
                                               scheme=self.scheme)
        return self

    def transform_states(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        x, z = propagate(self.x0, self.z0, np.atleast_2d(np.asarray(X, dtype=float)), self.params_)
        return np.stack([x, z], axis=-1)

    def transform(self, X):
        s = self.transform_states(X)
        return np.concatenate([s[..., 0], s[..., 1]], axis=1)
