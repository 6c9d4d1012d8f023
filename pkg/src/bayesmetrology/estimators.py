"""scikit-learn style wrappers.

``PersonickEstimator`` fits the optimal single-shot measurement for a probe
and prior; ``BayesianPhaseEstimator`` turns records of measurement outcomes
into posterior-mean phase estimates for a chosen scheme.
"""
from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator

from .bayes import ThetaGrid, mse_repeated, posterior
from .fock import make_probe, probe_from_name
from .personick import FlatPrior, averaged_moments, solve_estimator
from .povm import PhaseLikelihood, scheme_for_probe


def _probe(state, probe_params, cutoff):
    kind = probe_from_name(state, **(probe_params or {}))
    return make_probe(kind, cutoff)


class PersonickEstimator(BaseEstimator):
    """Optimal single-shot estimator for a named probe.

    After :meth:`fit`, ``bound_`` is the minimum single-shot mean squared
    error and ``estimates_`` the phase assigned to each measurement outcome.
    :meth:`predict` maps outcome indices to those estimates.
    """

    def __init__(self, state="noon", w0=math.pi / 2, theta_bar=0.0, method="sector",
                 cutoff=None, probe_params=None):
        self.state = state
        self.w0 = w0
        self.theta_bar = theta_bar
        self.method = method
        self.cutoff = cutoff
        self.probe_params = probe_params

    def fit(self, X=None, y=None):
        self.probe_ = _probe(self.state, self.probe_params, self.cutoff)
        self.prior_ = FlatPrior(self.theta_bar, self.w0)
        self.solution_ = solve_estimator(averaged_moments(self.probe_, self.prior_, self.method))
        self.bound_ = self.solution_.bound
        self.estimates_ = self.solution_.estimates
        return self

    def predict(self, X):
        idx = np.asarray(X, dtype=np.int64)
        return self.estimates_[idx]


class BayesianPhaseEstimator(BaseEstimator):
    """Posterior-mean phase estimates from repeated measurements.

    ``X`` passed to :meth:`predict` is an integer array of shape
    ``(n_records, n_shots)`` holding outcome indices of the chosen scheme.
    """

    def __init__(self, state="noon", scheme="optimal", w0=math.pi / 2, theta_bar=0.0,
                 grid_points=1001, cutoff=None, probe_params=None):
        self.state = state
        self.scheme = scheme
        self.w0 = w0
        self.theta_bar = theta_bar
        self.grid_points = grid_points
        self.cutoff = cutoff
        self.probe_params = probe_params

    def fit(self, X=None, y=None):
        self.probe_ = _probe(self.state, self.probe_params, self.cutoff)
        self.prior_ = FlatPrior(self.theta_bar, self.w0)
        self.povm_ = scheme_for_probe(self.scheme, self.probe_, self.prior_)
        self.likelihood_ = PhaseLikelihood(self.probe_, self.povm_)
        self.grid_ = ThetaGrid.for_prior(self.prior_, self.grid_points)
        self.table_ = self.likelihood_.probabilities(self.grid_.points)
        return self

    def _posteriors(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.int64))
        return [posterior(self.grid_, self.prior_, self.table_, row) for row in X]

    def predict(self, X):
        return np.array([self.grid_.integrate(p * self.grid_.points) for p in self._posteriors(X)])

    def predict_variance(self, X):
        out = []
        for p in self._posteriors(X):
            m = self.grid_.integrate(p * self.grid_.points)
            out.append(self.grid_.integrate(p * (self.grid_.points - m) ** 2))
        return np.array(out)

    def sample(self, theta, n_shots, seed=0):
        """Draw outcome records at true phases ``theta`` (one record each)."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        rng = np.random.default_rng(seed)
        p = self.likelihood_.probabilities(theta).T
        cdf = np.cumsum(p, axis=1)
        cdf /= cdf[:, -1:]
        u = rng.random((theta.size, n_shots))
        out = np.array([np.searchsorted(c, r, side="right") for c, r in zip(cdf, u)])
        return np.minimum(out, p.shape[1] - 1)

    def mse_curve(self, mu_max, **kwargs):
        return mse_repeated(self.probe_, self.povm_, self.prior_, mu_max,
                            grid=self.grid_, **kwargs)
