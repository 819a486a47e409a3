import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cdo_ld.pool import (DiscreteTimeDistribution, LossProbMeasure, PoolSpec, TabulatedDistribution,
                         TrancheSpec, assumption_report, build_loss_measure, check_investment_grade,
                         check_nondegeneracy, check_not_flat, chebyshev_tail_bound, two_type_pool)

from conftest import homogeneous_pool


def test_tabulated_cdf_interpolates_linearly():
    d = TabulatedDistribution([0.0, 1.0, 2.0], [0.0, 0.1, 0.3], 0.7)
    assert d.cdf(0.5) == pytest.approx(0.05)
    assert d.cdf(1.5) == pytest.approx(0.2)
    assert d.cdf(10.0) == pytest.approx(0.3)
    assert d.cdf(np.inf) == 1.0
    assert d.default_prob(2.0) == pytest.approx(0.3)


def test_tabulated_rejects_bad_grids():
    with pytest.raises(ValueError):
        TabulatedDistribution([0.5, 1.0], [0.0, 0.1], 0.9)
    with pytest.raises(ValueError):
        TabulatedDistribution([0.0, 1.0, 1.0], [0.0, 0.1, 0.2], 0.8)
    with pytest.raises(ValueError):
        TabulatedDistribution([0.0, 1.0], [0.0, 0.1], 0.5)


def test_tabulated_inverse_round_trips():
    d = TabulatedDistribution([0.0, 1.0, 3.0, 5.0], [0.0, 0.02, 0.05, 0.06], 0.94)
    u = np.linspace(0.01, 0.99, 25)
    t = d.inverse_cdf(u, 5.0)
    np.testing.assert_allclose(d.cdf(t), u * 0.06, atol=1e-14)
    assert np.all((t >= 0) & (t < 5.0))


def test_atom_at_zero_in_tabulated_law():
    d = TabulatedDistribution([0.0, 1.0], [0.2, 0.3], 0.7)
    assert d.cdf(0.0) == pytest.approx(0.2)
    assert d.cdf_left(0.0) == 0.0
    assert d.inverse_cdf(0.5, 1.0) == 0.0


def test_discrete_time_law_steps():
    d = DiscreteTimeDistribution([1.0, 2.0, 4.0], [0.1, 0.2, 0.3])
    assert d.tail_mass == pytest.approx(0.4)
    assert d.cdf(1.0) == pytest.approx(0.1)
    assert d.cdf_left(1.0) == 0.0
    assert d.default_prob(4.0) == pytest.approx(0.3)
    assert d.default_prob(4.5) == pytest.approx(0.6)
    assert d.inverse_cdf(0.0, 4.5) == 1.0
    assert d.inverse_cdf(0.6, 4.5) == 4.0


def test_tranche_validation_and_sorting():
    tr = TrancheSpec(0.1, 0.15, 0.0, 5.0, (5.0, 1.0, 3.0))
    assert tr.premium_dates == (1.0, 3.0, 5.0)
    for bad in [dict(alpha=0.2, beta=0.1), dict(premium_dates=()), dict(premium_dates=(6.0,)),
                dict(R=-0.1), dict(T=0.0)]:
        kw = dict(alpha=0.1, beta=0.15, R=0.0, T=5.0, premium_dates=(1.0,))
        kw.update(bad)
        with pytest.raises(ValueError):
            TrancheSpec(**kw)


def test_from_atoms_merges_to_twelve_decimals():
    m = LossProbMeasure.from_atoms([0.1, 0.1 + 1e-14, 0.3, 0.3])
    assert len(m) == 2
    np.testing.assert_allclose(m.weights, [0.5, 0.5])
    m2 = LossProbMeasure.from_atoms([0.1, 0.1 + 1e-9])
    assert len(m2) == 2


def test_measure_rejects_bad_weights():
    with pytest.raises(ValueError):
        LossProbMeasure(np.array([0.1, 0.2]), np.array([0.5, 0.6]))
    with pytest.raises(ValueError):
        LossProbMeasure(np.array([1.2]), np.array([1.0]))


def test_loss_measure_mean_equals_average_default_prob():
    T = 5.0
    dists = [TabulatedDistribution.from_default_prob(p, T) for p in (0.01, 0.02, 0.02, 0.07)]
    dists.append(DiscreteTimeDistribution([1.0, 6.0], [0.05, 0.1]))
    pool = PoolSpec(tuple(dists))
    m = build_loss_measure(pool, T)
    direct = math.fsum(d.default_prob(T) for d in dists) / len(dists)
    assert abs(m.mean - direct) <= 1e-12
    assert m.mass_at(0.02) == pytest.approx(0.4)


def test_investment_grade_examples():
    assert check_investment_grade(LossProbMeasure.dirac(0.05), 0.1) == (pytest.approx(0.05), True)
    mean, ok = check_investment_grade(LossProbMeasure.from_atoms([0.2, 0.1]), 0.1)
    assert mean == pytest.approx(0.15) and not ok


def test_nondegeneracy_examples():
    assert check_nondegeneracy(LossProbMeasure.dirac(0.05), 0.1)
    assert not check_nondegeneracy(LossProbMeasure.from_atoms([0.0, 0.5], [0.95, 0.05]), 0.1)
    assert check_nondegeneracy(LossProbMeasure.from_atoms([0.0, 0.2], [0.5, 0.5]), 0.3)


def test_not_flat_detects_names_without_late_mass():
    T = 5.0
    smooth = TabulatedDistribution.from_default_prob(0.05, T)
    early = TabulatedDistribution([0.0, 1.0, 5.0], [0.0, 0.05, 0.05], 0.95)
    frac, ok = check_not_flat(PoolSpec((smooth,) * 10), T, 0.1)
    assert frac == 0.0 and ok
    frac, ok = check_not_flat(PoolSpec((smooth, early) * 5), T, 0.1)
    assert frac == 0.5 and not ok


def test_atom_at_one_bounded_by_mean():
    m = LossProbMeasure.from_atoms([0.0, 0.3, 1.0], [0.5, 0.3, 0.2])
    assert m.mass_at(1.0) <= m.mean


def test_chebyshev_bound_monotone():
    m = LossProbMeasure.from_atoms([0.02, 0.05], [1 / 3, 2 / 3])
    bounds = [chebyshev_tail_bound(m, N, 0.1)[0] for N in (10, 100, 1000)]
    assert bounds[0] > bounds[1] > bounds[2]
    by_alpha = [chebyshev_tail_bound(m, 100, a)[0] for a in (0.06, 0.1, 0.2)]
    assert by_alpha[0] > by_alpha[1] > by_alpha[2]
    with pytest.raises(ValueError):
        chebyshev_tail_bound(m, 100, 0.03)


def test_two_type_pool_pattern():
    a = TabulatedDistribution.from_default_prob(0.1, 5.0)
    b = TabulatedDistribution.from_default_prob(0.01, 5.0)
    pool = two_type_pool(9, a, b)
    assert [d is a for d in pool.names] == [False, False, True] * 3


def test_assumption_report_flags():
    pool = homogeneous_pool(20, 0.2)
    tr = TrancheSpec(0.1, 0.15, 0.0, 5.0, (5.0,))
    rep = assumption_report(pool, tr)
    assert not rep.ig_ok and rep.failures() == ["investment-grade"]
    assert rep.chebyshev_bound is None


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0.01, 1)), min_size=1, max_size=8))
def test_measure_invariants(atoms):
    pts = [p for p, _ in atoms]
    w = np.array([x for _, x in atoms])
    m = LossProbMeasure.from_atoms(pts, w / w.sum())
    assert abs(math.fsum(m.weights) - 1.0) <= 1e-12
    assert np.all(np.diff(m.points) > 0)
    assert m.mass_at(1.0) <= m.mean + 1e-15
