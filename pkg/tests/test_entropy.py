import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cdo_ld.entropy import (BoundaryCase, brute_force_rate, dhbar_db1, hbar, legendre_rate, phi,
                            rate_i, sigma_sq, solve_lambda, tilted_mean)
from cdo_ld.pool import LossProbMeasure

mp.mp.dps = 40


def mp_hbar(b1, b2):
    b1, b2 = mp.mpf(b1), mp.mpf(b2)
    return b1 * mp.log(b1 / b2) + (1 - b1) * mp.log((1 - b1) / (1 - b2))


def mp_phi(p, lam):
    p, e = mp.mpf(p), mp.exp(mp.mpf(lam))
    return p * e / (1 - p + p * e)


@pytest.mark.parametrize("b1,b2", [(0.1, 0.02), (0.5, 0.5), (0.02, 0.1), (0.999, 0.3), (1e-6, 0.2)])
def test_hbar_matches_extended_precision(b1, b2):
    assert hbar(b1, b2) == pytest.approx(float(mp_hbar(b1, b2)), rel=1e-12, abs=1e-16)


def test_hbar_value_at_reference_point():
    # 0.1 ln 5 + 0.9 ln(0.9/0.98)
    assert hbar(0.1, 0.02) == pytest.approx(0.0843017637, abs=1e-10)


def test_hbar_edge_cases():
    assert hbar(0.3, 0.3) == 0.0
    assert hbar(1.0, 0.25) == pytest.approx(math.log(4))
    assert hbar(0.0, 0.25) == pytest.approx(-math.log(0.75))
    assert hbar(0.5, 0.0) == math.inf
    assert hbar(0.5, 1.0) == math.inf
    assert hbar(0.0, 0.0) == 0.0
    with pytest.raises(ValueError):
        hbar(1.2, 0.5)


def test_hbar_derivative_matches_finite_difference():
    h = 1e-6
    fd = (hbar(0.2 + h, 0.05) - hbar(0.2 - h, 0.05)) / (2 * h)
    assert dhbar_db1(0.2, 0.05) == pytest.approx(fd, rel=1e-8)


@pytest.mark.parametrize("p,lam", [(0.02, 0.5848), (0.3, -2.0), (0.5, 10.0), (1e-8, 30.0), (0.9, -40.0)])
def test_phi_matches_extended_precision(p, lam):
    assert phi(p, lam) == pytest.approx(float(mp_phi(p, lam)), rel=1e-13)


def test_phi_limits_and_fixed_points():
    p = np.array([0.0, 0.2, 1.0])
    np.testing.assert_array_equal(phi(p, math.inf), [0.0, 1.0, 1.0])
    np.testing.assert_array_equal(phi(p, -math.inf), [0.0, 0.0, 1.0])
    np.testing.assert_allclose(phi(p, 0.0), p)
    assert phi(0.0, 5.0) == 0.0 and phi(1.0, -5.0) == 1.0


def test_single_atom_closed_form():
    m = LossProbMeasure.dirac(0.02)
    sol = solve_lambda(m, 0.1)
    assert sol.boundary_case is BoundaryCase.INTERIOR
    assert sol.lam == pytest.approx(math.log(0.1 * 0.98 / (0.9 * 0.02)), abs=1e-12)
    assert sol.rate == pytest.approx(hbar(0.1, 0.02), abs=1e-14)
    assert sol.sigma_sq == pytest.approx(0.09, abs=1e-14)


def test_two_atom_reference(two_atom):
    sol = solve_lambda(two_atom, 0.1)
    assert tilted_mean(two_atom, sol.lam) == pytest.approx(0.1, abs=1e-14)
    # derived from an independent 1e-4 grid minimisation of the primal problem
    assert sol.lam == pytest.approx(0.98923515, abs=1e-7)
    assert sol.rate == pytest.approx(0.0337943114, abs=1e-9)
    assert abs(brute_force_rate(two_atom, 0.1, 1e-4) - sol.rate) < 1e-6
    assert legendre_rate(two_atom, 0.1, sol.lam) == pytest.approx(sol.rate, abs=1e-14)


def test_alpha_at_mean_gives_zero_multiplier():
    m = LossProbMeasure.from_atoms([0.02, 0.08], [0.5, 0.5])
    sol = solve_lambda(m, 0.05)
    assert abs(sol.lam) < 1e-10
    assert sol.rate == pytest.approx(0.0, abs=1e-20)


def test_alpha_below_mean_gives_negative_multiplier():
    sol = solve_lambda(LossProbMeasure.dirac(0.2), 0.1)
    assert sol.lam < 0 and sol.interior


def test_boundary_cases():
    m = LossProbMeasure.from_atoms([0.0, 0.5, 1.0], [0.3, 0.5, 0.2])
    assert solve_lambda(m, 0.2).boundary_case is BoundaryCase.LAMBDA_MINUS_INF
    assert solve_lambda(m, 0.7).boundary_case is BoundaryCase.LAMBDA_PLUS_INF
    assert solve_lambda(m, 0.1).boundary_case is BoundaryCase.INFEASIBLE
    assert solve_lambda(m, 0.8).boundary_case is BoundaryCase.INFEASIBLE
    assert rate_i(m, 0.1) == math.inf
    with pytest.raises(ValueError):
        sigma_sq(m, 0.1)
    # minus-infinity boundary: everything except the atom at 1 is tilted to 0
    sol = solve_lambda(m, 0.2)
    assert sol.rate == pytest.approx(0.5 * hbar(0.0, 0.5), abs=1e-14)
    assert sol.sigma_sq == 0.0


def test_degenerate_measure():
    m = LossProbMeasure.from_atoms([0.0, 1.0], [0.7, 0.3])
    sol = solve_lambda(m, 0.3)
    assert sol.boundary_case is BoundaryCase.DEGENERATE_MU_DAGGER
    assert sol.rate == 0.0


def test_three_atom_oracle():
    m = LossProbMeasure.from_atoms([0.01, 0.05, 0.2], [0.25, 0.5, 0.25])
    sol = solve_lambda(m, 0.15)
    assert abs(brute_force_rate(m, 0.15, 1e-3) - sol.rate) < 1e-5
    assert sol.rate == pytest.approx(0.03244592, abs=1e-8)


def test_brute_force_infeasible_is_infinite():
    m = LossProbMeasure.from_atoms([0.0, 0.5], [0.95, 0.05])
    assert brute_force_rate(m, 0.1, 1e-3) == math.inf


def _measures():
    pts = st.floats(1e-4, 1 - 1e-4)
    return st.lists(st.tuples(pts, st.floats(0.05, 1.0)), min_size=1, max_size=5).map(
        lambda a: LossProbMeasure.from_atoms([p for p, _ in a],
                                             np.array([w for _, w in a]) / sum(w for _, w in a)))


@settings(max_examples=80, deadline=None)
@given(_measures(), st.floats(0.01, 0.99))
def test_solution_satisfies_constraint_and_duality(m, alpha):
    sol = solve_lambda(m, alpha)
    assert sol.interior
    assert tilted_mean(m, sol.lam) == pytest.approx(alpha, abs=1e-12)
    assert sol.rate >= 0
    assert legendre_rate(m, alpha, sol.lam) == pytest.approx(sol.rate, abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(_measures())
def test_rate_nondecreasing_above_mean(m):
    alphas = np.linspace(m.mean, 0.99, 12)[1:]
    rates = [rate_i(m, a) for a in alphas]
    assert all(b >= a - 1e-15 for a, b in zip(rates, rates[1:]))


@settings(max_examples=40, deadline=None)
@given(_measures(), st.floats(-20, 20), st.floats(0, 5))
def test_tilted_mean_monotone(m, lam, step):
    assert tilted_mean(m, lam + step) >= tilted_mean(m, lam) - 1e-15
