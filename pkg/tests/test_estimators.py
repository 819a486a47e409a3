import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import FunctionTransformer

from cdo_ld.asymptotics import spread_asymptotic
from cdo_ld.entropy import solve_lambda
from cdo_ld.estimators import EntropicTilt, TrancheAsymptotics, check_default_probs
from cdo_ld.pool import LossProbMeasure

PROBS = np.array([0.02] * 100 + [0.05] * 200)


def test_tilt_fit_matches_solver():
    est = EntropicTilt(alpha=0.1).fit(PROBS)
    sol = solve_lambda(LossProbMeasure.from_atoms(PROBS), 0.1)
    assert est.lambda_ == sol.lam and est.rate_ == sol.rate and est.sigma_sq_ == sol.sigma_sq
    assert est.boundary_case_ == "interior" and est.n_names_ == 300
    assert abs(est.transform(PROBS).mean() - 0.1) <= 1e-12


def test_tilt_shapes_and_inverse():
    est = EntropicTilt(alpha=0.1).fit(PROBS.reshape(-1, 1))
    out = est.transform(PROBS.reshape(-1, 1))
    assert out.shape == (300, 1)
    np.testing.assert_allclose(est.inverse_transform(out), PROBS.reshape(-1, 1), rtol=1e-13)


def test_params_and_clone():
    est = EntropicTilt(alpha=0.07)
    assert est.get_params() == {"alpha": 0.07}
    c = clone(est.set_params(alpha=0.12))
    assert c.alpha == 0.12 and not hasattr(c, "lambda_")
    pricer = TrancheAsymptotics(alpha=0.1, beta=0.15, rate=0.05, horizon=5.0)
    assert set(pricer.get_params()) == {"alpha", "beta", "rate", "horizon", "premium_dates"}


def test_not_fitted_and_validation():
    with pytest.raises(NotFittedError):
        EntropicTilt().transform(PROBS)
    with pytest.raises(ValueError):
        check_default_probs(np.ones((3, 2)) * 0.1)
    with pytest.raises(ValueError):
        EntropicTilt().fit([0.1, 1.5])
    with pytest.raises(ValueError):
        EntropicTilt().fit([0.1, np.nan])


def test_pricer_matches_library(two_atom, tranche):
    pricer = TrancheAsymptotics(0.1, 0.15, 0.05, 5.0).fit(PROBS)
    res = spread_asymptotic(two_atom, tranche, 300)
    assert pricer.spread_ == pytest.approx(res.spread, rel=1e-13)
    spreads = pricer.predict([300, 600])
    assert spreads[0] == pytest.approx(res.spread, rel=1e-13)
    assert spreads[1] < spreads[0]


def test_pricer_default_dates():
    assert TrancheAsymptotics(horizon=3.5)._tranche().premium_dates == (1.0, 2.0, 3.0)
    assert TrancheAsymptotics(horizon=0.5)._tranche().premium_dates == (0.5,)


def test_pipeline_from_raw_inputs():
    # a transformer producing default probabilities feeding the pricer
    to_probs = FunctionTransformer(lambda x: 1 - np.exp(-np.asarray(x)))
    pipe = make_pipeline(to_probs, EntropicTilt(alpha=0.1))
    hazards = -np.log1p(-PROBS)
    out = pipe.fit(hazards).transform(hazards)
    assert abs(out.mean() - 0.1) < 1e-12
    assert math.isfinite(pipe[-1].lambda_)
