"""Integrated Bernoulli entropy, its dual multiplier and the variance factor.

For a loss measure ``m`` on ``[0, 1]`` and attachment ``alpha`` the rate is

    I(alpha, m) = inf { int hbar(phi(p), p) m(dp) : int phi dm = alpha },

where ``hbar`` is the Bernoulli relative entropy.  The minimiser is the
exponential tilt ``phi(p) = tilt(p, lam)`` with the multiplier ``lam``
chosen so the tilted mean equals ``alpha``.  :func:`solve_lambda` finds it
and classifies the boundary cases.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ConvergenceError
from .pool import LossProbMeasure

BOUNDARY_TOL = 1e-12
# contract is |tilted mean - alpha| <= 1e-12; aim well below it so per-name
# sums over merged atoms stay inside the contract
ROOT_TOL = 1e-15
_INITIAL_BRACKET = 50.0
_MAX_BRACKET = 1e4
_MAX_ITER = 500


class BoundaryCase(str, enum.Enum):
    INTERIOR = "interior"
    LAMBDA_MINUS_INF = "lambda_minus_inf"
    LAMBDA_PLUS_INF = "lambda_plus_inf"
    DEGENERATE_MU_DAGGER = "degenerate_mu_dagger"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class RateSolution:
    alpha: float
    lam: float
    rate: float
    sigma_sq: float
    boundary_case: BoundaryCase

    @property
    def interior(self) -> bool:
        return self.boundary_case is BoundaryCase.INTERIOR


# ---------------------------------------------------------------------------
# entropy and tilt
# ---------------------------------------------------------------------------


def _check_unit(name, x):
    if np.any((x < 0) | (x > 1)) or np.any(np.isnan(x)):
        raise ValueError(f"{name} must lie in [0, 1]")


def hbar(b1, b2):
    """Relative entropy of Bernoulli(``b1``) with respect to Bernoulli(``b2``).

    Vectorised; infinite where ``b1`` puts mass on an outcome ``b2`` excludes.
    """
    b1 = np.asarray(b1, dtype=float)
    b2 = np.asarray(b2, dtype=float)
    _check_unit("b1", b1)
    _check_unit("b2", b2)
    b1, b2 = np.broadcast_arrays(b1, b2)
    out = np.full(b1.shape, np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        inner = (b1 > 0) & (b1 < 1) & (b2 > 0) & (b2 < 1)
        x, y = b1[inner], b2[inner]
        out[inner] = x * (np.log(x) - np.log(y)) + (1.0 - x) * (np.log1p(-x) - np.log1p(-y))
        one = (b1 == 1) & (b2 > 0)
        out[one] = -np.log(b2[one])
        zero = (b1 == 0) & (b2 < 1)
        out[zero] = -np.log1p(-b2[zero])
    # rounding can leave -1e-17 at b1 == b2
    out = np.maximum(out, 0.0)
    return out[()] if out.ndim == 0 else out


def dhbar_db1(b1, b2):
    """Derivative of :func:`hbar` in its first argument (interior only)."""
    b1 = np.asarray(b1, dtype=float)
    b2 = np.asarray(b2, dtype=float)
    return (np.log(b1) - np.log(b2)) - (np.log1p(-b1) - np.log1p(-b2))


def phi(p, lam):
    """Exponentially tilted default probability ``p e^lam / (1 - p + p e^lam)``.

    ``lam = +inf`` sends every positive ``p`` to 1, ``lam = -inf`` sends every
    ``p < 1`` to 0.
    """
    p = np.asarray(p, dtype=float)
    _check_unit("p", p)
    lam = float(lam)
    if lam == math.inf:
        out = (p > 0).astype(float)
    elif lam == -math.inf:
        out = (p == 1).astype(float)
    elif lam >= 0:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = p / (p + (1.0 - p) * math.exp(-lam))
        out = np.where(p == 0, 0.0, out)
    else:
        e = math.exp(lam)
        out = p * e / (1.0 - p + p * e)
    return out[()] if out.ndim == 0 else out


def tilted_mean(m: LossProbMeasure, lam) -> float:
    return float(np.dot(m.weights, phi(m.points, lam)))


# ---------------------------------------------------------------------------
# root finding
# ---------------------------------------------------------------------------


def _find_root(f, lo, hi, flo, fhi, tol=ROOT_TOL):
    """Bisection with secant proposals kept inside the bracket.

    ``f`` is nondecreasing with ``flo < 0 < fhi``.
    """
    x, fx = lo, flo
    for _ in range(_MAX_ITER):
        # secant step, accepted only if it lands well inside the bracket
        x = hi - fhi * (hi - lo) / (fhi - flo)
        width = hi - lo
        if not (lo + 0.05 * width < x < hi - 0.05 * width):
            x = 0.5 * (lo + hi)
        fx = f(x)
        if abs(fx) <= tol:
            return x
        if fx < 0:
            lo, flo = x, fx
        else:
            hi, fhi = x, fx
        if hi - lo <= 4 * np.finfo(float).eps * max(1.0, abs(x)):
            return x if abs(fx) <= abs(flo) and abs(fx) <= abs(fhi) else (lo if -flo < fhi else hi)
    raise ConvergenceError(f"root finder did not converge: f({x!r}) = {fx!r}")


def solve_lambda(m: LossProbMeasure, alpha) -> RateSolution:
    """Solve for the multiplier and assemble the rate and variance factor.

    Boundary classification uses the point masses ``m{0}``, ``m{1}`` with an
    absolute tolerance of 1e-12.
    """
    alpha = float(alpha)
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    m0, m1 = m.mass_at(0.0), m.mass_at(1.0)
    hit_lo = abs(alpha - m1) <= BOUNDARY_TOL
    hit_hi = abs(alpha - (1.0 - m0)) <= BOUNDARY_TOL
    if hit_lo and hit_hi:
        return RateSolution(alpha, math.nan, 0.0, 0.0, BoundaryCase.DEGENERATE_MU_DAGGER)
    if m1 > alpha + BOUNDARY_TOL or alpha > 1.0 - m0 + BOUNDARY_TOL:
        return RateSolution(alpha, math.nan, math.inf, math.nan, BoundaryCase.INFEASIBLE)
    if hit_lo:
        return _assemble(m, alpha, -math.inf, BoundaryCase.LAMBDA_MINUS_INF)
    if hit_hi:
        return _assemble(m, alpha, math.inf, BoundaryCase.LAMBDA_PLUS_INF)

    pts, wts = m.points, m.weights

    def f(lam):
        return float(np.dot(wts, phi(pts, lam))) - alpha

    lo, hi = -_INITIAL_BRACKET, _INITIAL_BRACKET
    flo, fhi = f(lo), f(hi)
    while flo > 0 or fhi < 0:
        if hi > _MAX_BRACKET:
            raise ConvergenceError(f"could not bracket multiplier for alpha={alpha}")
        if flo > 0:
            hi, fhi = lo, flo
            lo *= 2.0
            flo = f(lo)
        else:
            lo, flo = hi, fhi
            hi *= 2.0
            fhi = f(hi)
    if flo == 0:
        lam = lo
    elif fhi == 0:
        lam = hi
    else:
        lam = _find_root(f, lo, hi, flo, fhi)
    return _assemble(m, alpha, lam, BoundaryCase.INTERIOR)


def _assemble(m, alpha, lam, case):
    tilted = phi(m.points, lam)
    rate = float(np.dot(m.weights, hbar(tilted, m.points)))
    var = float(np.dot(m.weights, tilted * (1.0 - tilted)))
    return RateSolution(alpha, float(lam), rate, var, case)


def rate_i(m: LossProbMeasure, alpha) -> float:
    """Minimal averaged entropy subject to tilted mean ``alpha`` (``inf`` if infeasible)."""
    return solve_lambda(m, alpha).rate


def sigma_sq(m: LossProbMeasure, alpha) -> float:
    """Variance factor ``int tilt(1 - tilt) dm`` at the solved multiplier."""
    sol = solve_lambda(m, alpha)
    if sol.boundary_case is BoundaryCase.INFEASIBLE:
        raise ValueError(f"alpha={alpha} is infeasible for this measure; variance factor undefined")
    return sol.sigma_sq


# ---------------------------------------------------------------------------
# brute-force oracle
# ---------------------------------------------------------------------------


def _grid(step):
    n = int(round(1.0 / step))
    return np.linspace(0.0, 1.0, n + 1)


def brute_force_rate(m: LossProbMeasure, alpha, grid_step=1e-4) -> float:
    """Direct minimisation of the averaged entropy over a dense grid.

    Supports measures with at most three atoms.  The heaviest atom's tilted
    value is pinned by the mean constraint; the others range over a uniform
    grid on ``[0, 1]`` with both endpoints included.  Returns ``inf`` if no
    grid point is feasible.
    """
    k = len(m)
    if k > 3:
        raise ValueError("brute_force_rate supports at most 3 atoms")
    p, w = m.points, m.weights
    pin = int(np.argmax(w))
    free = [i for i in range(k) if i != pin]
    g = _grid(grid_step)
    if free:
        mesh = np.meshgrid(*([g] * len(free)), indexing="ij")
        phis = [x.ravel() for x in mesh]
    else:
        phis = []
    partial = np.zeros(phis[0].shape if phis else (1,))
    cost = np.zeros_like(partial)
    with np.errstate(invalid="ignore"):
        for i, ph in zip(free, phis):
            partial = partial + w[i] * ph
            cost = cost + w[i] * hbar(ph, np.full_like(ph, p[i]))
    pinned = (alpha - partial) / w[pin]
    # the pinned coordinate may be off [0, 1] by rounding only
    pinned = np.where(np.abs(pinned) < 1e-13, 0.0, pinned)
    pinned = np.where(np.abs(pinned - 1.0) < 1e-13, 1.0, pinned)
    ok = (pinned >= 0) & (pinned <= 1)
    if not np.any(ok):
        return math.inf
    cost = cost[ok] + w[pin] * hbar(pinned[ok], np.full(int(ok.sum()), p[pin]))
    return float(np.min(cost))


def legendre_rate(m: LossProbMeasure, alpha, lam) -> float:
    """Dual form ``alpha*lam - int log(1 - p + p e^lam) dm`` for finite ``lam``."""
    lam = float(lam)
    if lam >= 0:
        logd = lam + np.log(m.points + (1.0 - m.points) * math.exp(-lam))
    else:
        logd = np.log1p(m.points * (math.exp(lam) - 1.0))
    return alpha * lam - float(np.dot(m.weights, logd))
