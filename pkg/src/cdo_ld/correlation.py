"""Finite-state systemic mixtures and their Gaussian-copula discretisation.

Conditionally on a systemic state ``x`` the names are independent, so each
state gets its own loss measure and asymptotic protection leg; the
unconditional leg is the probability-weighted sum over states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

from .asymptotics import AsymptoticResult, premium_leg, spread_asymptotic
from .entropy import solve_lambda
from .exceptions import AssumptionError
from .pool import LossProbMeasure, PoolSpec, TrancheSpec, build_loss_measure, check_investment_grade

TIE_TOL = 1e-12


@dataclass(frozen=True)
class SystemicState:
    label: str
    prob: float
    measure: LossProbMeasure


@dataclass(frozen=True)
class SystemicMixture:
    states: tuple

    def __post_init__(self):
        states = tuple(sorted(self.states, key=lambda s: s.label))
        if not states:
            raise ValueError("a mixture needs at least one state")
        labels = [s.label for s in states]
        if len(set(labels)) != len(labels):
            raise ValueError("state labels must be unique")
        if any(s.prob <= 0 for s in states):
            raise ValueError("state probabilities must be positive")
        total = math.fsum(s.prob for s in states)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"state probabilities sum to {total!r}, expected 1")
        object.__setattr__(self, "states", states)

    @classmethod
    def from_pools(cls, states: Sequence[tuple], T):
        """Build from ``(label, prob, PoolSpec)`` triples."""
        return cls(tuple(SystemicState(str(lab), float(p), build_loss_measure(pool, T))
                         for lab, p, pool in states))

    def __len__(self):
        return len(self.states)


@dataclass(frozen=True)
class StateContribution:
    label: str
    prob: float
    result: AsymptoticResult
    contribution: float


@dataclass(frozen=True)
class MixtureResult:
    protection_leg: float
    spread: float
    breakdown: tuple
    ig_failures: tuple = ()


def _state_ig_failures(mix, alpha):
    return tuple((s.label, s.measure.mean) for s in mix.states
                 if not check_investment_grade(s.measure, alpha)[1])


def mixture_protection_leg(mix: SystemicMixture, tranche: TrancheSpec, N,
                           enforce_ig: bool = True) -> MixtureResult:
    """Probability-weighted sum of per-state asymptotic protection legs.

    Each state uses its own multiplier and variance factor.  With
    ``enforce_ig`` a state whose mean default probability is not below the
    attachment point raises :class:`AssumptionError` naming the state;
    otherwise failing states are reported in ``ig_failures`` and still
    priced (if their multiplier is positive).
    """
    fails = _state_ig_failures(mix, tranche.alpha)
    if fails and enforce_ig:
        labels = ", ".join(f"{lab} (mean {mean:.6g})" for lab, mean in fails)
        raise AssumptionError("investment-grade",
                              f"per-state investment-grade assumption violated in state(s): {labels}",
                              states=[lab for lab, _ in fails])
    parts = []
    for s in mix.states:
        res = spread_asymptotic(s.measure, tranche, N)
        parts.append(StateContribution(s.label, s.prob, res, res.protection_leg * s.prob))
    # fixed order (sorted labels) keeps the reduction deterministic
    total = math.fsum(c.contribution for c in parts)
    return MixtureResult(total, total / premium_leg(tranche), tuple(parts), fails)


def dominant_state(mix: SystemicMixture, tranche: TrancheSpec, N):
    """State with the smallest rate and its single-term protection-leg approximation."""
    rates = [(solve_lambda(s.measure, tranche.alpha).rate, s) for s in mix.states]
    rates.sort(key=lambda r: r[0])
    if len(rates) > 1 and abs(rates[1][0] - rates[0][0]) <= TIE_TOL:
        raise ValueError(f"no unique dominant state: {rates[0][1].label!r} and "
                         f"{rates[1][1].label!r} have equal rates {rates[0][0]!r}")
    best = rates[0][1]
    return best.label, spread_asymptotic(best.measure, tranche, N).protection_leg * best.prob


# ---------------------------------------------------------------------------
# Gaussian copula
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CopulaGrid:
    M: int
    rho: float
    nodes: np.ndarray
    probs: np.ndarray


def gaussian_copula_grid(M, rho) -> CopulaGrid:
    """Nodes ``i/M`` for ``|i| <= M^2`` with normal-CDF bin probabilities.

    Bins are centred on the nodes with half-width ``1/(2M)``; the two end
    bins absorb the tails.  The lower half is computed from the lower tail
    and mirrored so the probabilities are exactly symmetric.
    """
    M = int(M)
    if M < 1:
        raise ValueError("M must be at least 1")
    if not 0 < rho < 1:
        raise ValueError("rho must lie in (0, 1)")
    i = np.arange(-M * M, M * M + 1)
    nodes = i / M
    # upper edges of the bins strictly below the centre bin
    lower_edges = (np.arange(-M * M, 0) + 0.5) / M
    cum = special.ndtr(lower_edges)
    lower = np.diff(np.concatenate([[0.0], cum]))
    centre = 1.0 - 2.0 * cum[-1]
    probs = np.concatenate([lower, [centre], lower[::-1]])
    return CopulaGrid(M, float(rho), nodes, probs)


def conditional_default_prob(p, rho, x):
    """``Phi((Phi^{-1}(p) - rho x) / sqrt(1 - rho^2))``; 0 and 1 are fixed points."""
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore"):
        z = (special.ndtri(p) - rho * x) / math.sqrt(1.0 - rho * rho)
    out = special.ndtr(z)
    out = np.where(p == 0, 0.0, np.where(p == 1, 1.0, out))
    return out[()] if out.ndim == 0 else out


def copula_mixture(default_probs, grid: CopulaGrid) -> SystemicMixture:
    """Mixture whose state ``x_i`` has the conditional default probabilities."""
    probs = np.asarray(default_probs, dtype=float)
    states = []
    width = len(str(grid.M * grid.M))
    for k, (x, w) in enumerate(zip(grid.nodes, grid.probs)):
        if w <= 0:
            continue
        cond = conditional_default_prob(probs, grid.rho, x)
        # zero-padded index labels sort in node order
        states.append(SystemicState(f"x{k:0{width + 1}d}", float(w), LossProbMeasure.from_atoms(cond)))
    total = math.fsum(s.prob for s in states)
    states = [SystemicState(s.label, s.prob / total, s.measure) for s in states]
    return SystemicMixture(tuple(states))


def copula_mixture_from_pool(pool: PoolSpec, T, grid: CopulaGrid) -> SystemicMixture:
    return copula_mixture(pool.default_probs(T), grid)
