"""scikit-learn style wrappers around the solver and the asymptotic pricer.

Both estimators take a vector of per-name default probabilities as ``X``
(shape ``(n_names,)`` or ``(n_names, 1)``), so they can sit in a
:class:`sklearn.pipeline.Pipeline` after any transformer that produces
default probabilities.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .asymptotics import spread_asymptotic
from .entropy import phi, solve_lambda
from .pool import LossProbMeasure, TrancheSpec


def check_default_probs(X):
    """Validate ``X`` as a column of probabilities; return it flat plus the input ndim."""
    arr = check_array(X, ensure_2d=False, dtype=np.float64, input_name="X")
    if arr.ndim == 2:
        if arr.shape[1] != 1:
            raise ValueError(f"expected a single column of default probabilities, got shape {arr.shape}")
        flat = arr[:, 0]
    elif arr.ndim == 1:
        flat = arr
    else:
        raise ValueError("X must be 1-d or a single column")
    if np.any((flat < 0) | (flat > 1)):
        raise ValueError("default probabilities must lie in [0, 1]")
    return flat, arr.ndim


class EntropicTilt(TransformerMixin, BaseEstimator):
    """Tilt default probabilities so their average equals ``alpha``.

    Fitting solves for the multiplier on the empirical measure of ``X``;
    ``transform`` applies ``p -> p e^lam / (1 - p + p e^lam)``.

    Attributes
    ----------
    lambda_ : float
    rate_ : float
        Averaged entropy cost of the tilt.
    sigma_sq_ : float
        Average Bernoulli variance of the tilted probabilities.
    boundary_case_ : str
    loss_measure_ : LossProbMeasure
    n_names_ : int
    """

    def __init__(self, alpha=0.1):
        self.alpha = alpha

    def fit(self, X, y=None):
        p, _ = check_default_probs(X)
        self.loss_measure_ = LossProbMeasure.from_atoms(p)
        sol = solve_lambda(self.loss_measure_, self.alpha)
        self.solution_ = sol
        self.lambda_ = sol.lam
        self.rate_ = sol.rate
        self.sigma_sq_ = sol.sigma_sq
        self.boundary_case_ = sol.boundary_case.value
        self.n_names_ = p.size
        return self

    def _apply(self, X, sign):
        check_is_fitted(self, "lambda_")
        lam = sign * self.lambda_
        if np.isnan(lam):
            raise ValueError(f"no multiplier available ({self.boundary_case_})")
        p, ndim = check_default_probs(X)
        out = phi(p, lam)
        return out.reshape(-1, 1) if ndim == 2 else np.atleast_1d(out)

    def transform(self, X):
        return self._apply(X, 1.0)

    def inverse_transform(self, X):
        return self._apply(X, -1.0)


class TrancheAsymptotics(BaseEstimator):
    """Asymptotic protection leg and spread for a pool given by default probabilities.

    ``fit`` stores the empirical loss measure of ``X`` and the full
    asymptotic record at ``N = len(X)`` in ``result_``.  ``predict`` returns
    spreads for other pool sizes with the same empirical measure.

    Parameters
    ----------
    alpha, beta : float
        Attachment and detachment fractions.
    rate : float
        Interest rate per year.
    horizon : float
        Maturity in years.
    premium_dates : sequence of float, optional
        Defaults to annual dates ``1, 2, ..., floor(horizon)`` (or just the
        horizon if it is shorter than a year).
    """

    def __init__(self, alpha=0.1, beta=0.15, rate=0.0, horizon=5.0, premium_dates=None):
        self.alpha = alpha
        self.beta = beta
        self.rate = rate
        self.horizon = horizon
        self.premium_dates = premium_dates

    def _tranche(self):
        dates = self.premium_dates
        if dates is None:
            n = int(np.floor(self.horizon))
            dates = tuple(float(k) for k in range(1, n + 1)) or (float(self.horizon),)
        return TrancheSpec(self.alpha, self.beta, self.rate, self.horizon, tuple(dates))

    def fit(self, X, y=None, prefactor_probs=None):
        p, _ = check_default_probs(X)
        self.tranche_ = self._tranche()
        self.loss_measure_ = LossProbMeasure.from_atoms(p)
        self.prefactor_measure_ = None
        if prefactor_probs is not None:
            q, _ = check_default_probs(prefactor_probs)
            self.prefactor_measure_ = LossProbMeasure.from_atoms(q)
        self.n_names_ = p.size
        self.result_ = spread_asymptotic(self.loss_measure_, self.tranche_, p.size,
                                         prefactor_measure=self.prefactor_measure_)
        self.spread_ = self.result_.spread
        return self

    def predict(self, n_names):
        """Spreads for each pool size in ``n_names``."""
        check_is_fitted(self, "result_")
        ns = np.atleast_1d(np.asarray(n_names, dtype=int))
        return np.array([
            spread_asymptotic(self.loss_measure_, self.tranche_, int(n),
                              prefactor_measure=self.prefactor_measure_).spread
            for n in ns
        ])
