import math

import numpy as np
import pytest
from scipy import stats

from cdo_ld.asymptotics import protection_leg_asymptotic
from cdo_ld.correlation import (SystemicMixture, SystemicState, conditional_default_prob, copula_mixture,
                                dominant_state, gaussian_copula_grid, mixture_protection_leg)
from cdo_ld.entropy import solve_lambda
from cdo_ld.exceptions import AssumptionError
from cdo_ld.pool import LossProbMeasure


def _state(label, prob, probs):
    return SystemicState(label, prob, LossProbMeasure.from_atoms(probs))


def test_single_state_collapses(two_atom, tranche):
    mix = SystemicMixture((SystemicState("x", 1.0, two_atom),))
    res = mixture_protection_leg(mix, tranche, 300)
    assert res.protection_leg == protection_leg_asymptotic(two_atom, tranche, 300)


def test_identical_states_sum_out(two_atom, tranche):
    mix = SystemicMixture((SystemicState("a", 0.3, two_atom), SystemicState("b", 0.7, two_atom)))
    single = protection_leg_asymptotic(two_atom, tranche, 300)
    assert mixture_protection_leg(mix, tranche, 300).protection_leg == pytest.approx(single, rel=1e-15)


def test_mixture_assembly_identity(tranche):
    a = _state("calm", 0.8, [0.01, 0.02, 0.03])
    b = _state("stress", 0.2, [0.03, 0.05, 0.06])
    res = mixture_protection_leg(SystemicMixture((b, a)), tranche, 300)
    hand = 0.8 * protection_leg_asymptotic(a.measure, tranche, 300) + \
        0.2 * protection_leg_asymptotic(b.measure, tranche, 300)
    assert abs(res.protection_leg - hand) <= 1e-12 * hand
    assert [c.label for c in res.breakdown] == ["calm", "stress"]
    # stressed state has the smaller rate and dominates
    assert res.breakdown[1].contribution > res.breakdown[0].contribution


def test_per_state_investment_grade_enforced(tranche):
    mix = SystemicMixture((_state("ok", 0.5, [0.02]), _state("bad", 0.5, [0.2])))
    with pytest.raises(AssumptionError, match="bad"):
        mixture_protection_leg(mix, tranche, 100)


def test_probabilities_validated():
    m = LossProbMeasure.dirac(0.02)
    with pytest.raises(ValueError):
        SystemicMixture((SystemicState("a", 0.5, m), SystemicState("b", 0.4, m)))
    with pytest.raises(ValueError):
        SystemicMixture((SystemicState("a", 0.5, m), SystemicState("a", 0.5, m)))


def test_dominant_state_and_ratio_improves(tranche):
    a = _state("a", 0.5, [0.02, 0.04])
    b = _state("b", 0.5, [0.015, 0.03])
    mix = SystemicMixture((a, b))
    assert solve_lambda(a.measure, 0.1).rate < solve_lambda(b.measure, 0.1).rate
    ratios = []
    for N in (200, 400, 800):
        lab, single = dominant_state(mix, tranche, N)
        assert lab == "a"
        full = mixture_protection_leg(mix, tranche, N).protection_leg
        assert single <= full
        ratios.append(single / full)
    assert ratios[0] < ratios[1] < ratios[2] < 1


def test_dominant_state_tie_rejected(tranche):
    mix = SystemicMixture((_state("a", 0.5, [0.03]), _state("b", 0.5, [0.03])))
    with pytest.raises(ValueError, match="no unique dominant state"):
        dominant_state(mix, tranche, 100)


def test_copula_grid_m1():
    g = gaussian_copula_grid(1, 0.3)
    np.testing.assert_array_equal(g.nodes, [-1.0, 0.0, 1.0])
    assert g.probs[1] == pytest.approx(stats.norm.cdf(0.5) - stats.norm.cdf(-0.5), abs=1e-15)
    assert g.probs[1] == pytest.approx(0.382925, abs=1e-6)


@pytest.mark.parametrize("M", [1, 3, 10, 20])
def test_copula_grid_sums_to_one_and_is_symmetric(M):
    g = gaussian_copula_grid(M, 0.5)
    assert g.nodes.size == 2 * M * M + 1
    assert math.fsum(g.probs) == 1.0
    np.testing.assert_allclose(g.probs, g.probs[::-1], rtol=0, atol=1e-14)
    assert g.nodes[0] == -M and g.nodes[-1] == M


def test_conditional_default_prob_properties():
    assert conditional_default_prob(0.05, 1e-9, 1.3) == pytest.approx(0.05, rel=1e-7)
    for rho in (0.1, 0.5, 0.9):
        assert conditional_default_prob(0.05, rho, 0.0) < 0.05
    assert conditional_default_prob(0.0, 0.4, -2.0) == 0.0
    assert conditional_default_prob(1.0, 0.4, 2.0) == 1.0
    x = np.linspace(-3, 3, 13)
    vals = conditional_default_prob(0.05, 0.4, x)
    assert np.all(np.diff(vals) < 0)


def test_tower_property_on_grid():
    g = gaussian_copula_grid(20, 0.4)
    for p in (0.01, 0.05, 0.2):
        avg = math.fsum(g.probs * conditional_default_prob(p, 0.4, g.nodes))
        assert abs(avg - p) < 2e-3


def test_copula_mixture_state_means_decrease():
    g = gaussian_copula_grid(3, 0.3)
    mix = copula_mixture(np.full(50, 0.03), g)
    assert len(mix) == g.nodes.size
    means = [s.measure.mean for s in mix.states]
    assert all(b < a for a, b in zip(means, means[1:]))
    assert math.fsum(s.prob for s in mix.states) == pytest.approx(1.0, abs=1e-15)
