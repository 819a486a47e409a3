"""Merton first-passage defaults with gamma-distributed volatilities.

A name's log-value is ``(theta - sigma^2/2) t + sigma W_t`` started at 0,
and it defaults when that path first reaches ``-ln(1/K)``.  With positive
net drift some paths never hit; that mass sits at ``t = inf``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special

from .exceptions import ConvergenceError
from .pool import DefaultDistribution, LossProbMeasure, PoolSpec

QUAD_T0 = 1e-12
QUAD_TOL = 1e-10
TRUNCATION_Q = 1e-9
_N_PANELS = 48
_MAX_DEPTH = 50

normal_cdf = special.ndtr


@dataclass(frozen=True)
class MertonParams:
    theta: float
    K: float
    sigma: float

    def __post_init__(self):
        if not 0 < self.K <= 1:
            raise ValueError("barrier K must lie in (0, 1]")
        if not self.sigma > 0:
            raise ValueError("volatility must be positive")

    @property
    def distance(self) -> float:
        """``ln(1/K)``, the log-distance to the barrier."""
        return -math.log(self.K)

    @property
    def drift(self) -> float:
        """Net drift of the log-value, ``theta - sigma^2/2``."""
        return self.theta - 0.5 * self.sigma**2


@dataclass(frozen=True)
class GammaVolSpec:
    scale: float
    shape: float

    def __post_init__(self):
        if not (self.scale > 0 and self.shape > 0):
            raise ValueError("gamma scale and shape must be positive")

    def pdf(self, s):
        s = np.asarray(s, dtype=float)
        a, c = self.shape, self.scale
        with np.errstate(divide="ignore"):
            logpdf = (a - 1) * np.log(s) - s / c - a * math.log(c) - special.gammaln(a)
        return np.where(s > 0, np.exp(logpdf), 0.0)

    def cdf(self, s):
        return special.gammainc(self.shape, np.maximum(np.asarray(s, dtype=float), 0.0) / self.scale)


# ---------------------------------------------------------------------------
# first-passage law
# ---------------------------------------------------------------------------


def first_passage_density(t, params: MertonParams):
    """Density of the barrier-hitting time at ``t > 0``."""
    t = np.asarray(t, dtype=float)
    b, nu, s2 = params.distance, params.drift, params.sigma**2
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = b / np.sqrt(2 * math.pi * s2 * t**3) * np.exp(-((nu * t + b) ** 2) / (2 * s2 * t))
    return np.where(t > 0, np.nan_to_num(out), 0.0)


def _simpson_panel(f, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6 * (fa + 4 * flm + fm)
    right = (b - m) / 6 * (fm + 4 * frm + fb)
    delta = left + right - whole
    if abs(delta) <= 15 * tol:
        return left + right + delta / 15
    if depth <= 0:
        raise ConvergenceError(f"adaptive Simpson hit max depth on [{a}, {b}]")
    return (_simpson_panel(f, a, m, fa, flm, fm, left, tol / 2, depth - 1)
            + _simpson_panel(f, m, b, fm, frm, fb, right, tol / 2, depth - 1))


def adaptive_simpson(f, a, b, tol=QUAD_TOL, depth=_MAX_DEPTH):
    """Recursive interval-halving Simpson rule with Richardson correction."""
    fa, fb, fm = f(a), f(b), f(0.5 * (a + b))
    whole = (b - a) / 6 * (fa + 4 * fm + fb)
    return _simpson_panel(f, a, b, fa, fm, fb, whole, tol, depth)


def merton_default_prob(params: MertonParams, T) -> float:
    """``P(tau < T)`` by adaptive quadrature of the first-passage density.

    The density is integrated over ``[1e-12, T]``, pre-split into
    log-spaced panels so that narrow early peaks are resolved; below
    ``1e-12`` it is negligibly small and dropped.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    if params.distance == 0.0:
        return 1.0
    b, nu, s2 = params.distance, params.drift, params.sigma**2
    c = b / math.sqrt(2 * math.pi * s2)

    def f(t):
        return c * t**-1.5 * math.exp(-((nu * t + b) ** 2) / (2 * s2 * t))

    edges = np.geomspace(QUAD_T0, T, _N_PANELS + 1) if T > QUAD_T0 else np.array([0.0, T])
    tol = QUAD_TOL / _N_PANELS
    total = math.fsum(adaptive_simpson(f, lo, hi, tol) for lo, hi in zip(edges[:-1], edges[1:]))
    return min(max(total, 0.0), 1.0)


def _closed_cdf(t, sigma, theta, b):
    """Vectorised closed-form first-passage CDF; broadcasting over all arguments."""
    t = np.asarray(t, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    nu = theta - 0.5 * sigma**2
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        sq = sigma * np.sqrt(t)
        first = special.ndtr((-b - nu * t) / sq)
        log_second = -2 * nu * b / sigma**2 + special.log_ndtr((-b + nu * t) / sq)
        out = first + np.exp(log_second)
    out = np.where(t > 0, np.nan_to_num(out), 0.0)
    if b == 0:
        out = np.where(t >= 0, 1.0, out)
    return np.clip(out, 0.0, 1.0)


def merton_default_prob_closed(params: MertonParams, T) -> float:
    """Closed-form first-passage probability of drifted Brownian motion.

    With ``b = ln(1/K)`` and ``nu = theta - sigma^2/2``::

        p = N((-b - nu T)/(sigma sqrt T)) + exp(-2 nu b / sigma^2) N((-b + nu T)/(sigma sqrt T))
    """
    if not T > 0:
        raise ValueError("T must be positive")
    return float(_closed_cdf(T, params.sigma, params.theta, params.distance))


def merton_never_default_mass(params: MertonParams) -> float:
    """Mass at ``t = inf``: ``1 - exp(-2 nu b / sigma^2)`` for positive drift, else 0."""
    nu, b = params.drift, params.distance
    if nu <= 0 or b == 0:
        return 0.0
    return -math.expm1(-2 * nu * b / params.sigma**2)


class MertonDistribution(DefaultDistribution):
    """Default-time law of a Merton first-passage name.

    Evaluated through the closed-form CDF so that pools of thousands of
    names and Monte Carlo sampling stay vectorised.
    """

    def __init__(self, params: MertonParams):
        self.params = params

    @property
    def tail_mass(self):
        return merton_never_default_mass(self.params)

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        p = self.params
        out = _closed_cdf(t, p.sigma, p.theta, p.distance)
        return np.where(np.isposinf(t), 1.0, out)[()]

    def cdf_left(self, t):
        t = np.asarray(t, dtype=float)
        p = self.params
        out = _closed_cdf(t, p.sigma, p.theta, p.distance)
        out = np.where(np.isposinf(t), 1.0 - self.tail_mass, out)
        return np.where(t <= 0, 0.0, out)[()]

    def inverse_cdf(self, u, T):
        u = np.asarray(u, dtype=float)
        return merton_conditional_quantile(u, self.params.sigma, self.params.theta,
                                           self.params.distance, T)

    def __repr__(self):
        p = self.params
        return f"MertonDistribution(theta={p.theta}, K={p.K}, sigma={p.sigma})"


def merton_conditional_quantile(u, sigma, theta, b, T, iterations=64):
    """Bisection for ``t`` in ``[0, T)`` with ``cdf(t) = u cdf(T)``, vectorised over names."""
    u, sigma = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(sigma, dtype=float))
    if b == 0:
        return np.zeros(u.shape)[()]
    target = u * _closed_cdf(T, sigma, theta, b)
    lo = np.zeros(u.shape)
    hi = np.full(u.shape, float(T))
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        below = _closed_cdf(mid, sigma, theta, b) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return np.minimum(0.5 * (lo + hi), np.nextafter(T, 0.0))[()]


# ---------------------------------------------------------------------------
# gamma volatility pools
# ---------------------------------------------------------------------------


def gamma_inverse_cdf(spec: GammaVolSpec, u):
    """Volatility ``sigma`` with ``P(gamma <= sigma) = u``; vectorised over ``u``."""
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0) | (u >= 1)):
        raise ValueError("u must lie in (0, 1)")
    out = spec.scale * special.gammaincinv(spec.shape, u)
    return float(out) if out.ndim == 0 else out


def build_gamma_merton_pool(spec: GammaVolSpec, theta, K, N) -> PoolSpec:
    """``N`` Merton names with volatilities at the gamma quantiles ``n/(N+1)``."""
    if N < 1:
        raise ValueError("N must be at least 1")
    sigmas = gamma_merton_volatilities(spec, N)
    return PoolSpec(tuple(MertonDistribution(MertonParams(theta, K, s)) for s in sigmas))


def gamma_merton_volatilities(spec: GammaVolSpec, N) -> np.ndarray:
    N = int(N)
    return gamma_inverse_cdf(spec, np.arange(1, N + 1) / (N + 1))


def gamma_merton_default_probs(spec: GammaVolSpec, theta, K, N, T) -> np.ndarray:
    """Closed-form ``p_n`` for the quantile pool, without building distribution objects."""
    sig = gamma_merton_volatilities(spec, N)
    return _closed_cdf(T, sig, theta, -math.log(K))


def gamma_merton_loss_measure(spec: GammaVolSpec, theta, K, N, T) -> LossProbMeasure:
    return LossProbMeasure.from_atoms(gamma_merton_default_probs(spec, theta, K, N, T))


@dataclass(frozen=True)
class LimitingMeasure:
    """Quadrature discretisation of the large-pool loss measure."""

    measure: LossProbMeasure
    sigmas: np.ndarray
    sigma_weights: np.ndarray
    truncated_mass: float


def limiting_measure_details(spec: GammaVolSpec, theta, K, T, n_quad=128) -> LimitingMeasure:
    if n_quad < 8:
        raise ValueError("n_quad must be at least 8")
    lo = gamma_inverse_cdf(spec, TRUNCATION_Q)
    hi = gamma_inverse_cdf(spec, 1.0 - TRUNCATION_Q)
    x, w = np.polynomial.legendre.leggauss(n_quad)
    sig = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
    wts = 0.5 * (hi - lo) * w * spec.pdf(sig)
    outside = float(spec.cdf(lo) + (1.0 - spec.cdf(hi)))
    if outside > 1e-8:
        warnings.warn(f"volatility truncation leaves {outside:.3g} gamma mass outside the grid")
    wts = wts / wts.sum()
    probs = np.array([merton_default_prob(MertonParams(theta, K, s), T) for s in sig])
    measure = LossProbMeasure.from_atoms(probs, wts)
    return LimitingMeasure(measure, sig, wts, outside)


def limiting_measure(spec: GammaVolSpec, theta, K, T, n_quad=128) -> LossProbMeasure:
    """Gauss-Legendre discretisation of the gamma mixture of Merton default probabilities."""
    return limiting_measure_details(spec, theta, K, T, n_quad).measure
