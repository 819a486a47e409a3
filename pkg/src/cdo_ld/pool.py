"""Default-time laws, name pools, tranche terms and the induced loss measure.

A pool of N names is summarised, for pricing purposes, by the empirical
measure of the names' default-by-horizon probabilities,

    U_N = (1/N) * sum_n delta_{p_n},   p_n = P(tau_n < T),

which is what :func:`build_loss_measure` returns.  The assumption checks
in this module evaluate the finite-N left-hand sides of the conditions the
asymptotic pricing formula relies on.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

_MERGE_DECIMALS = 12
_MASS_TOL = 1e-12


def _readonly(a):
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


# ---------------------------------------------------------------------------
# default-time distributions
# ---------------------------------------------------------------------------


class DefaultDistribution(ABC):
    """Law of a single name's default time on ``[0, inf]``.

    Subclasses provide the CDF ``t -> mu[0, t]`` and the left limit
    ``t -> mu[0, t)``; everything else is derived.  ``mu{inf}`` is the
    explicit :attr:`tail_mass` and is never encoded as a float time.
    """

    @property
    @abstractmethod
    def tail_mass(self) -> float:
        """Probability of never defaulting."""

    @abstractmethod
    def cdf(self, t):
        """``mu[0, t]``; ``cdf(inf) == 1``."""

    @abstractmethod
    def cdf_left(self, t):
        """``mu[0, t)``."""

    @abstractmethod
    def inverse_cdf(self, u, T):
        """Quantile of the default time conditioned on ``tau < T``.

        ``u`` in ``[0, 1)`` maps to a time in ``[0, T)`` with
        ``cdf(t) ~= u * default_prob(T)``.
        """

    def window_prob(self, a, b):
        """``mu[a, b)``."""
        return np.maximum(np.asarray(self.cdf_left(b)) - np.asarray(self.cdf_left(a)), 0.0)

    def default_prob(self, T) -> float:
        """``mu[0, T)``, the probability of defaulting before the horizon."""
        return float(np.clip(self.cdf_left(T), 0.0, 1.0))


class TabulatedDistribution(DefaultDistribution):
    """Piecewise-linear CDF on a finite grid, remaining mass at infinity.

    ``times`` must start at 0 and be strictly increasing.  A positive
    ``values[0]`` is an atom at ``t = 0``.  Beyond the last grid time the
    CDF is flat, and ``values[-1] + tail_mass`` must equal 1.
    """

    def __init__(self, times, values, tail_mass):
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if times.ndim != 1 or times.shape != values.shape or times.size < 2:
            raise ValueError("times and values must be 1-d arrays of equal length >= 2")
        if times[0] != 0.0:
            raise ValueError("time grid must start at 0")
        if np.any(np.diff(times) <= 0) or not np.all(np.isfinite(times)):
            raise ValueError("time grid must be finite and strictly increasing")
        if np.any(np.diff(values) < 0) or values[0] < 0:
            raise ValueError("CDF values must be nonnegative and nondecreasing")
        tail_mass = float(tail_mass)
        if tail_mass < 0 or abs(values[-1] + tail_mass - 1.0) > 1e-9:
            raise ValueError(
                f"last CDF value {values[-1]!r} plus tail mass {tail_mass!r} must equal 1"
            )
        self.times = _readonly(times)
        self.values = _readonly(values)
        self._tail = tail_mass

    @classmethod
    def from_default_prob(cls, p, T, n_points=2):
        """Uniform default time on ``[0, T)`` with total probability ``p``."""
        t = np.linspace(0.0, T, n_points)
        return cls(t, p * t / T, 1.0 - p)

    @property
    def tail_mass(self):
        return self._tail

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        out = np.interp(t, self.times, self.values)
        out = np.where(t < 0, 0.0, out)
        return np.where(np.isposinf(t), 1.0, out)[()]

    def cdf_left(self, t):
        t = np.asarray(t, dtype=float)
        out = np.interp(t, self.times, self.values)
        return np.where(t <= 0, 0.0, out)[()]

    def inverse_cdf(self, u, T):
        u = np.asarray(u, dtype=float)
        target = u * self.default_prob(T)
        idx = np.searchsorted(self.values, target, side="left")
        idx = np.clip(idx, 1, self.values.size - 1)
        v0, v1 = self.values[idx - 1], self.values[idx]
        t0, t1 = self.times[idx - 1], self.times[idx]
        with np.errstate(invalid="ignore", divide="ignore"):
            t = t0 + (target - v0) / (v1 - v0) * (t1 - t0)
        t = np.where(target <= self.values[0], 0.0, t)
        return np.minimum(t, np.nextafter(T, 0.0))[()]

    def __repr__(self):
        return f"TabulatedDistribution(n_points={self.times.size}, tail_mass={self._tail:.6g})"


class DiscreteTimeDistribution(DefaultDistribution):
    """Default time supported on finitely many dates plus infinity."""

    def __init__(self, times, probs, tail_mass=None):
        times = np.asarray(times, dtype=float)
        probs = np.asarray(probs, dtype=float)
        if times.ndim != 1 or times.shape != probs.shape:
            raise ValueError("times and probs must be 1-d arrays of equal length")
        if np.any(np.diff(times) <= 0) or (times.size and times[0] < 0):
            raise ValueError("atom times must be nonnegative and strictly increasing")
        if np.any(probs < 0):
            raise ValueError("atom probabilities must be nonnegative")
        if tail_mass is None:
            tail_mass = max(0.0, 1.0 - probs.sum())
        if abs(probs.sum() + tail_mass - 1.0) > 1e-9:
            raise ValueError("atom probabilities plus tail mass must equal 1")
        self.times = _readonly(times)
        self.probs = _readonly(probs)
        self._cum = _readonly(np.cumsum(probs))
        self._tail = float(tail_mass)

    @property
    def tail_mass(self):
        return self._tail

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.times, t, side="right")
        out = np.concatenate([[0.0], self._cum])[k]
        return np.where(np.isposinf(t), 1.0, out)[()]

    def cdf_left(self, t):
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.times, t, side="left")
        return np.concatenate([[0.0], self._cum])[k][()]

    def inverse_cdf(self, u, T):
        u = np.asarray(u, dtype=float)
        target = u * self.default_prob(T)
        idx = np.searchsorted(self._cum, target, side="right")
        idx = np.minimum(idx, self.times.size - 1)
        return self.times[idx][()]

    def __repr__(self):
        return f"DiscreteTimeDistribution(times={self.times.tolist()}, probs={self.probs.tolist()})"


# ---------------------------------------------------------------------------
# pools and tranches
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PoolSpec:
    """Ordered collection of independent names."""

    names: tuple

    def __post_init__(self):
        names = tuple(self.names)
        if len(names) < 1:
            raise ValueError("a pool needs at least one name")
        for d in names:
            if not isinstance(d, DefaultDistribution):
                raise TypeError(f"pool entries must be DefaultDistribution, got {type(d).__name__}")
        object.__setattr__(self, "names", names)

    @property
    def N(self) -> int:
        return len(self.names)

    def __len__(self):
        return len(self.names)

    def default_probs(self, T) -> np.ndarray:
        """Vector ``(mu_n[0, T))_n``."""
        return np.array([d.default_prob(T) for d in self.names])

    @classmethod
    def from_default_probs(cls, probs, T):
        """Pool of names with uniform default times on ``[0, T)``."""
        return cls(tuple(TabulatedDistribution.from_default_prob(p, T) for p in probs))


@dataclass(frozen=True)
class TrancheSpec:
    """Tranche terms.

    ``alpha``/``beta`` are attachment/detachment fractions, ``R`` the
    continuously compounded rate per year, ``T`` the horizon in years.
    """

    alpha: float
    beta: float
    R: float
    T: float
    premium_dates: tuple = field(default=())

    def __post_init__(self):
        if not 0.0 < self.alpha < self.beta <= 1.0:
            raise ValueError(f"need 0 < alpha < beta <= 1, got alpha={self.alpha}, beta={self.beta}")
        if self.R < 0:
            raise ValueError("interest rate must be nonnegative")
        if not self.T > 0:
            raise ValueError("horizon must be positive")
        dates = tuple(sorted(float(t) for t in self.premium_dates))
        if not dates:
            raise ValueError("premium_dates must be nonempty")
        if dates[0] <= 0 or dates[-1] > self.T:
            raise ValueError("premium dates must lie in (0, T]")
        object.__setattr__(self, "premium_dates", dates)

    def replace(self, **changes) -> "TrancheSpec":
        kw = dict(alpha=self.alpha, beta=self.beta, R=self.R, T=self.T,
                  premium_dates=self.premium_dates)
        kw.update(changes)
        return TrancheSpec(**kw)


# ---------------------------------------------------------------------------
# loss measure
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LossProbMeasure:
    """Finite probability measure on ``[0, 1]`` (default probabilities).

    Atoms are sorted by location.  Use :meth:`from_atoms` to build one from
    unmerged samples.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float).ravel()
        w = np.asarray(self.weights, dtype=float).ravel()
        if p.shape != w.shape or p.size == 0:
            raise ValueError("points and weights must be nonempty and of equal length")
        if np.any((p < 0) | (p > 1)) or not np.all(np.isfinite(p)):
            raise ValueError("atoms must lie in [0, 1]")
        if np.any(w <= 0):
            raise ValueError("atom weights must be positive")
        if abs(math.fsum(w) - 1.0) > _MASS_TOL:
            raise ValueError(f"weights sum to {math.fsum(w)!r}, expected 1")
        order = np.argsort(p, kind="stable")
        object.__setattr__(self, "points", _readonly(p[order]))
        object.__setattr__(self, "weights", _readonly(w[order]))

    @classmethod
    def from_atoms(cls, points, weights=None):
        """Merge atoms whose locations agree to 12 decimals; weights summed.

        Without ``weights`` every point gets mass ``1/len(points)``.  A merged
        atom sits at the weighted mean of its members' locations.
        """
        p = np.asarray(points, dtype=float).ravel()
        if weights is None:
            counts = np.ones_like(p)
            total = float(p.size)
        else:
            counts = np.asarray(weights, dtype=float).ravel()
            total = math.fsum(counts)
        keys = np.round(p, _MERGE_DECIMALS)
        uniq, inv = np.unique(keys, return_inverse=True)
        mass = np.bincount(inv, weights=counts, minlength=uniq.size)
        loc = np.bincount(inv, weights=counts * p, minlength=uniq.size) / mass
        keep = mass > 0
        return cls(np.clip(loc[keep], 0.0, 1.0), mass[keep] / total)

    @classmethod
    def dirac(cls, p):
        return cls(np.array([p]), np.array([1.0]))

    def __len__(self):
        return self.points.size

    def atoms(self):
        return list(zip(self.points.tolist(), self.weights.tolist()))

    def integrate(self, f: Callable) -> float:
        """``sum_i w_i f(p_i)``; ``f`` must accept an array."""
        return float(np.dot(self.weights, f(self.points)))

    @property
    def mean(self) -> float:
        return float(np.dot(self.weights, self.points))

    def mass_at(self, p) -> float:
        hit = np.round(self.points, _MERGE_DECIMALS) == round(float(p), _MERGE_DECIMALS)
        return float(self.weights[hit].sum())

    def mass_of_interval(self, lo, hi, include_lo=True, include_hi=False) -> float:
        left = self.points >= lo if include_lo else self.points > lo
        right = self.points <= hi if include_hi else self.points < hi
        return float(self.weights[left & right].sum())

    def __repr__(self):
        return f"LossProbMeasure(n_atoms={len(self)}, mean={self.mean:.6g})"


def build_loss_measure(pool: PoolSpec, T) -> LossProbMeasure:
    """Empirical measure of the names' default-by-``T`` probabilities."""
    return LossProbMeasure.from_atoms(pool.default_probs(T))


# ---------------------------------------------------------------------------
# assumption checks
# ---------------------------------------------------------------------------


def check_investment_grade(m: LossProbMeasure, alpha):
    """Return ``(mean, ok)`` with ``ok`` iff the mean default probability is below ``alpha``."""
    mean = m.mean
    return mean, bool(mean < alpha)


def check_nondegeneracy(m: LossProbMeasure, alpha) -> bool:
    """Fewer than a ``1 - alpha`` fraction of names are default-free."""
    return bool(m.mass_at(0.0) < 1.0 - alpha)


def default_not_flat_delta(T):
    return T / 20.0


def check_not_flat(pool: PoolSpec, T, alpha, delta=None, epsilon=1e-8):
    """Fraction of names with ``mu_n[T - delta, T) < epsilon`` and whether it is below ``alpha``."""
    if delta is None:
        delta = default_not_flat_delta(T)
    if not 0 < delta < T:
        raise ValueError("need 0 < delta < T")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    w = np.array([float(d.window_prob(T - delta, T)) for d in pool.names])
    fraction = float(np.count_nonzero(w < epsilon)) / pool.N
    return fraction, bool(fraction < alpha)


def chebyshev_tail_bound(m: LossProbMeasure, N, alpha):
    """Chebyshev bounds on ``P(L_{T-} > alpha)``.

    Returns ``(bound, crude)`` where ``bound`` uses the exact Bernoulli
    variances and ``crude = 1 / (4 N (alpha - mean)^2)``.
    """
    mean = m.mean
    if mean >= alpha:
        raise ValueError(f"mean default probability {mean:.6g} >= alpha {alpha}; bound is meaningless")
    gap2 = (alpha - mean) ** 2
    var = m.integrate(lambda p: p * (1.0 - p))
    return N * var / (N * N * gap2), 1.0 / (4.0 * N * gap2)


@dataclass(frozen=True)
class AssumptionReport:
    mean_default_prob: float
    ig_ok: bool
    zero_mass_fraction: float
    nondegen_ok: bool
    notflat_fraction: float
    notflat_ok: bool
    notflat_delta: float
    notflat_epsilon: float
    chebyshev_bound: float | None
    chebyshev_crude: float | None

    @property
    def all_ok(self) -> bool:
        return self.ig_ok and self.nondegen_ok and self.notflat_ok

    def failures(self) -> list[str]:
        out = []
        if not self.ig_ok:
            out.append("investment-grade")
        if not self.nondegen_ok:
            out.append("non-degeneracy")
        if not self.notflat_ok:
            out.append("not-flat")
        return out


def assumption_report(pool: PoolSpec, tranche: TrancheSpec, delta=None, epsilon=1e-8) -> AssumptionReport:
    m = build_loss_measure(pool, tranche.T)
    mean, ig_ok = check_investment_grade(m, tranche.alpha)
    if delta is None:
        delta = default_not_flat_delta(tranche.T)
    frac, nf_ok = check_not_flat(pool, tranche.T, tranche.alpha, delta, epsilon)
    bound = crude = None
    if ig_ok:
        bound, crude = chebyshev_tail_bound(m, pool.N, tranche.alpha)
    return AssumptionReport(
        mean_default_prob=mean,
        ig_ok=ig_ok,
        zero_mass_fraction=m.mass_at(0.0),
        nondegen_ok=check_nondegeneracy(m, tranche.alpha),
        notflat_fraction=frac,
        notflat_ok=nf_ok,
        notflat_delta=delta,
        notflat_epsilon=epsilon,
        chebyshev_bound=bound,
        chebyshev_crude=crude,
    )


def two_type_pool(N, dist_a: DefaultDistribution, dist_b: DefaultDistribution) -> PoolSpec:
    """Every third name (n = 3, 6, ...) follows ``dist_a``, the rest ``dist_b``."""
    return PoolSpec(tuple(dist_a if n % 3 == 0 else dist_b for n in range(1, N + 1)))
