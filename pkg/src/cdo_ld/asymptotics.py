"""Large-N protection leg, premium leg and spread for a tranche.

The protection leg is approximated by

    e^{-RT} Q(lam, g) / (N^{3/2} (beta - alpha) sqrt(2 pi s2)) * exp(-N I(alpha, U_N))

with ``g = ceil(N alpha) - N alpha`` the lattice offset of the attachment
point, ``Q`` the closed form of ``sum_{s in g + Z>=0} s e^{-lam s}`` and the
vanishing error term set to zero.  ``I`` is always evaluated on the
finite-pool measure ``U_N``; ``lam`` and ``s2`` may come from ``U_N`` or
from a limiting measure (the ``prefactor_measure`` argument).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .entropy import BoundaryCase, RateSolution, phi, solve_lambda
from .exceptions import AssumptionError, InfeasibleError
from .pool import LossProbMeasure, TrancheSpec

GRANULARITY_GUARD = 1e-9


@dataclass(frozen=True)
class AsymptoticResult:
    N: int
    granularity: float
    lam: float
    rate_i: float
    sigma_sq: float
    i2_factor: float
    protection_leg: float
    log_protection_leg: float
    premium_leg: float
    spread: float
    log_spread: float
    prefactor: float
    measure_source: str = "pool"


def granularity(N, alpha) -> float:
    """``ceil(N alpha) - N alpha``, snapped to 0 within 1e-9 of an integer."""
    x = N * alpha
    if abs(x - round(x)) <= GRANULARITY_GUARD:
        return 0.0
    return math.ceil(x) - x


def i2_factor(lam, g) -> float:
    """``exp(-lam g) * (e^-lam / (1 - e^-lam)^2 + g / (1 - e^-lam))``."""
    if not lam > 0:
        raise ValueError("i2_factor needs lam > 0; the series diverges otherwise")
    if not 0 <= g < 1:
        raise ValueError("granularity must lie in [0, 1)")
    q = -math.expm1(-lam)
    return math.exp(-lam * g) * (math.exp(-lam) / q**2 + g / q)


def i2_partial_sum(lam, g, s_max) -> float:
    """``sum s e^{-lam s}`` over ``s = g, g+1, ... <= s_max``."""
    s = g + np.arange(0, int(math.floor(s_max - g)) + 1)
    return float(np.sum(s * np.exp(-lam * s)))


def i2_tail_bound(lam, N) -> float:
    """Bound on the gap between :func:`i2_factor` and its ``N^{1/4}`` truncation."""
    return 4 * math.exp(-1) * math.exp(-0.5 * lam * (N**0.25 - 1)) / (lam * (-math.expm1(-lam)) ** 2)


def premium_leg(tranche: TrancheSpec) -> float:
    """Large-pool premium leg ``sum_t e^{-R t}``."""
    return math.fsum(math.exp(-tranche.R * t) for t in tranche.premium_dates)


def _require_interior(sol: RateSolution, what):
    if sol.boundary_case is BoundaryCase.INFEASIBLE:
        raise InfeasibleError(f"{what}: attachment point is infeasible (rate is infinite)",
                              alpha=sol.alpha)
    if sol.boundary_case is not BoundaryCase.INTERIOR:
        raise AssumptionError("non-degeneracy",
                              f"{what}: multiplier is not finite ({sol.boundary_case.value})",
                              case=sol.boundary_case.value)
    if not sol.lam > 0:
        raise AssumptionError("investment-grade",
                              f"{what}: investment-grade assumption violated "
                              f"(multiplier {sol.lam:.6g} <= 0, mean default probability >= alpha)",
                              lam=sol.lam)


def spread_asymptotic(m: LossProbMeasure, tranche: TrancheSpec, N, *,
                      prefactor_measure: LossProbMeasure | None = None,
                      solution: RateSolution | None = None,
                      prefactor_solution: RateSolution | None = None) -> AsymptoticResult:
    """Full asymptotic record for a pool of ``N`` names with loss measure ``m``.

    ``prefactor_measure`` switches the multiplier and variance factor in the
    pre-exponential term to another measure (e.g. the large-pool limit).
    Precomputed solutions can be passed to avoid re-solving.
    """
    N = int(N)
    alpha, beta = tranche.alpha, tranche.beta
    sol = solution if solution is not None else solve_lambda(m, alpha)
    _require_interior(sol, "pool measure")
    if prefactor_measure is None and prefactor_solution is None:
        pre = sol
        source = "pool"
    else:
        pre = prefactor_solution if prefactor_solution is not None else solve_lambda(prefactor_measure, alpha)
        _require_interior(pre, "prefactor measure")
        source = "limit"
    g = granularity(N, alpha)
    q = i2_factor(pre.lam, g)
    prefactor = math.exp(-tranche.R * tranche.T) * q / (
        N**1.5 * (beta - alpha) * math.sqrt(2 * math.pi * pre.sigma_sq))
    log_prot = math.log(prefactor) - N * sol.rate
    prem = premium_leg(tranche)
    prot = math.exp(log_prot)
    return AsymptoticResult(
        N=N, granularity=g, lam=pre.lam, rate_i=sol.rate, sigma_sq=pre.sigma_sq,
        i2_factor=q, protection_leg=prot, log_protection_leg=log_prot,
        premium_leg=prem, spread=prot / prem, log_spread=log_prot - math.log(prem),
        prefactor=prefactor, measure_source=source,
    )


def protection_leg_asymptotic(m: LossProbMeasure, tranche: TrancheSpec, N, **kw) -> float:
    """Asymptotic protection leg; see :func:`spread_asymptotic` for keywords."""
    return spread_asymptotic(m, tranche, N, **kw).protection_leg


def lambda_curve(m: LossProbMeasure, lambda_grid) -> list[tuple[float, float]]:
    """Tilted mean ``int tilt(p, lam) m(dp)`` on a grid of multipliers."""
    return [(float(lam), float(np.dot(m.weights, phi(m.points, lam)))) for lam in lambda_grid]


@dataclass
class SstarRow:
    N: int
    g: float
    lam: float
    rate_i: float
    sigma_sq: float
    sstar: float
    error: str | None = None


SSTAR_COLUMNS = ("N", "g", "lambda", "rate_i", "sigma_sq", "sstar")
LAMBDA_COLUMNS = ("lambda", "integral")


def sstar_prefactor(tranche: TrancheSpec) -> float:
    """``e^{-RT} / ((beta - alpha) sqrt(2 pi) sum_t e^{-Rt})``."""
    return math.exp(-tranche.R * tranche.T) / (
        (tranche.beta - tranche.alpha) * math.sqrt(2 * math.pi) * premium_leg(tranche))


def sstar_curve(measure_for_N: Callable[[int], LossProbMeasure], tranche: TrancheSpec,
                N_list: Sequence[int], limit_measure: LossProbMeasure | None = None,
                strip_prefactor: bool = False) -> list[SstarRow]:
    """"Theoretical" spread ``S*_N`` over a list of pool sizes.

    The exponent uses the rebuilt pool measure for every ``N``; multiplier
    and variance factor come from ``limit_measure`` when given.  Rows that
    fail carry the error message and NaN values.
    """
    if not len(N_list):
        raise ValueError("N_list must be nonempty")
    pre = solve_lambda(limit_measure, tranche.alpha) if limit_measure is not None else None
    scale = sstar_prefactor(tranche) if strip_prefactor else 1.0
    rows = []
    for N in N_list:
        try:
            res = spread_asymptotic(measure_for_N(int(N)), tranche, int(N), prefactor_solution=pre)
        except (ValueError, ArithmeticError) as exc:
            nan = math.nan
            rows.append(SstarRow(int(N), granularity(int(N), tranche.alpha), nan, nan, nan, nan, str(exc)))
            continue
        rows.append(SstarRow(res.N, res.granularity, res.lam, res.rate_i, res.sigma_sq,
                             res.spread / scale))
    return rows
