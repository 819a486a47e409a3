"""Plain and exponentially tilted Monte Carlo for the protection leg.

Under the tilted measure name ``n`` defaults before ``T`` with probability
``u~_n = tilt(u_n, lam)`` while its default time, given that it defaults
before ``T``, keeps its original conditional law.  The likelihood ratio then
collapses to ``exp(-N I) exp(-lam * gamma_N)`` with
``gamma_N = N (L_{T-} - alpha)``, so

    E[P_prot] = exp(-N I) * E~[P_prot exp(-lam gamma_N) 1{gamma_N > 0}].

Random streams: samples are simulated in fixed-size blocks, block ``b``
drawing from ``SeedSequence(seed, spawn_key=(b,))``.  Results therefore
depend only on ``(seed, n_samples)``, not on the number of worker threads.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .asymptotics import GRANULARITY_GUARD
from .entropy import BoundaryCase, phi, solve_lambda
from .exceptions import AssumptionError
from .merton import MertonDistribution, merton_conditional_quantile
from .pool import PoolSpec, TrancheSpec, build_loss_measure

BLOCK_SIZE = 4096
MIN_BIN_COUNT = 30
THREADS_ENV = "CDO_LD_THREADS"


# ---------------------------------------------------------------------------
# tilted pool
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TiltedPool:
    base: PoolSpec
    T: float
    alpha: float
    lam: float
    rate: float
    sigma_sq: float
    u: np.ndarray
    u_tilde: np.ndarray

    @property
    def N(self):
        return self.base.N

    def density_ratio(self, n, t):
        """``d mu~_n / d mu_n`` at time ``t`` (``inf`` allowed)."""
        u, ut = self.u[n], self.u_tilde[n]
        if u in (0.0, 1.0):
            return np.ones_like(np.asarray(t, dtype=float))[()]
        t = np.asarray(t, dtype=float)
        return np.where(t < self.T, ut / u, (1.0 - ut) / (1.0 - u))[()]


def tilt_pool(pool: PoolSpec, tranche: TrancheSpec) -> TiltedPool:
    """Tilt every name's default-by-``T`` probability with the pool multiplier."""
    m = build_loss_measure(pool, tranche.T)
    sol = solve_lambda(m, tranche.alpha)
    if sol.boundary_case is not BoundaryCase.INTERIOR:
        raise AssumptionError("feasibility",
                              f"multiplier is not finite ({sol.boundary_case.value}); "
                              "cannot simulate under the tilted measure",
                              case=sol.boundary_case.value)
    u = pool.default_probs(tranche.T)
    ut = phi(u, sol.lam)
    u.flags.writeable = False
    ut.flags.writeable = False
    return TiltedPool(pool, tranche.T, tranche.alpha, sol.lam, sol.rate, sol.sigma_sq, u, ut)


# ---------------------------------------------------------------------------
# path simulation
# ---------------------------------------------------------------------------


def _attach_count(N, alpha):
    x = N * alpha
    r = round(x)
    return float(r) if abs(x - r) <= GRANULARITY_GUARD else x


def _tranche_increments(N, tranche: TrancheSpec):
    """Jump of the tranched loss at the k-th default, ``k = 1..N``."""
    k = np.arange(0, N + 1) / N
    lt = np.clip(k, tranche.alpha, tranche.beta)
    inc = np.diff(lt) / (tranche.beta - tranche.alpha)
    inc[np.abs(inc) < 1e-14] = 0.0
    return inc


def protection_payoff(times, tranche: TrancheSpec, N) -> float:
    """Discounted tranche loss ``sum_k e^{-R tau_k} dLbar_k`` over defaults before ``T``."""
    t = np.sort(np.asarray(times, dtype=float))
    t = t[t < tranche.T]
    inc = _tranche_increments(N, tranche)[: t.size]
    return float(np.dot(inc, np.exp(-tranche.R * t)))


def _name_groups(pool: PoolSpec):
    """Split names into batched Merton groups (by theta, K) and generic names."""
    groups, generic = {}, []
    for j, d in enumerate(pool.names):
        if isinstance(d, MertonDistribution):
            key = (d.params.theta, d.params.distance)
            groups.setdefault(key, []).append(j)
        else:
            generic.append(j)
    out = []
    for (theta, b), idx in groups.items():
        idx = np.array(idx)
        sig = np.array([pool.names[j].params.sigma for j in idx])
        out.append((theta, b, idx, sig))
    return out, generic


def _fill_times(pool, groups, generic, hit, v, T):
    n, N = hit.shape
    times = np.full((n, N), np.inf)
    for theta, b, idx, sig in groups:
        sub = hit[:, idx]
        rows, cols = np.nonzero(sub)
        if rows.size:
            times[rows, idx[cols]] = merton_conditional_quantile(v[rows, idx[cols]], sig[cols], theta, b, T)
    for j in generic:
        rows = np.nonzero(hit[:, j])[0]
        if rows.size:
            times[rows, j] = pool.names[j].inverse_cdf(v[rows, j], T)
    return times


def _simulate_block(pool, groups, generic, probs, tranche, inc, attach, n, rng):
    N = pool.N
    hit = rng.random((n, N)) < probs
    v = rng.random((n, N))
    counts = hit.sum(axis=1)
    gamma = counts - attach
    kmin = int(np.argmax(inc > 0)) if np.any(inc > 0) else N
    payoff = np.zeros(n)
    active = counts > kmin
    if np.any(active) and tranche.beta > tranche.alpha:
        times = _fill_times(pool, groups, generic, hit[active], v[active], tranche.T)
        times.sort(axis=1)
        kmax = int(np.nonzero(inc)[0].max()) + 1
        sl = times[:, kmin:kmax]
        disc = np.where(np.isfinite(sl), np.exp(-tranche.R * np.where(np.isfinite(sl), sl, 0.0)), 0.0)
        payoff[active] = disc @ inc[kmin:kmax]
    return payoff, gamma


def _workers(n_jobs):
    if n_jobs is None:
        env = os.environ.get(THREADS_ENV)
        n_jobs = int(env) if env else 1
    return max(1, int(n_jobs))


def simulate(pool: PoolSpec, probs, tranche: TrancheSpec, n_samples, seed, n_jobs=None):
    """Simulate ``n_samples`` paths with default-by-``T`` probabilities ``probs``.

    Returns ``(payoff, gamma)`` arrays in sample order.
    """
    n_samples = int(n_samples)
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    probs = np.asarray(probs, dtype=float)
    groups, generic = _name_groups(pool)
    inc = _tranche_increments(pool.N, tranche)
    attach = _attach_count(pool.N, tranche.alpha)
    n_blocks = -(-n_samples // BLOCK_SIZE)

    def run(b):
        size = min(BLOCK_SIZE, n_samples - b * BLOCK_SIZE)
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(b,))))
        return _simulate_block(pool, groups, generic, probs, tranche, inc, attach, size, rng)

    workers = _workers(n_jobs)
    if workers == 1:
        parts = [run(b) for b in range(n_blocks)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(run, range(n_blocks)))
    payoff = np.concatenate([p for p, _ in parts])
    gamma = np.concatenate([g for _, g in parts])
    return payoff, gamma


def sample_loss_path(pool, tranche: TrancheSpec, rng):
    """One path: sorted default times in ``[0, T)`` and ``gamma_N``.

    ``pool`` may be a :class:`PoolSpec` (base measure) or a
    :class:`TiltedPool`.
    """
    if isinstance(pool, TiltedPool):
        base, probs = pool.base, pool.u_tilde
    else:
        base, probs = pool, pool.default_probs(tranche.T)
    hit = rng.random(base.N) < probs
    v = rng.random(base.N)
    times = np.array([base.names[j].inverse_cdf(v[j], tranche.T) for j in np.nonzero(hit)[0]])
    times.sort()
    return times, float(hit.sum() - _attach_count(base.N, tranche.alpha))


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class McEstimate:
    kind: str
    n_samples: int
    seed: int
    mean: float
    standard_error: float
    log_mean: float
    prefactor: float | None = None
    prefactor_se: float | None = None
    log_exponent: float | None = None
    lam: float | None = None
    n_effective: int | None = None


def _mean_se(x):
    n = x.size
    mean = float(np.mean(x))
    se = float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return mean, se


def _payoff_values(payoff, gamma, kind):
    if kind == "protection":
        return payoff
    if kind == "tail_indicator":
        return (gamma > 0).astype(float)
    raise ValueError(f"unknown payoff {kind!r}")


def estimate_protection_plain(pool: PoolSpec, tranche: TrancheSpec, n_samples, seed,
                              n_jobs=None, payoff="protection") -> McEstimate:
    """Direct sampling under the original measure."""
    pay, gamma = simulate(pool, pool.default_probs(tranche.T), tranche, n_samples, seed, n_jobs)
    x = _payoff_values(pay, gamma, payoff)
    mean, se = _mean_se(x)
    log_mean = math.log(mean) if mean > 0 else -math.inf
    return McEstimate("plain", int(n_samples), int(seed), mean, se, log_mean,
                      n_effective=int(np.count_nonzero(x)))


def estimate_protection_is(pool: PoolSpec, tranche: TrancheSpec, n_samples, seed,
                           n_jobs=None, payoff="protection", tilted: TiltedPool | None = None) -> McEstimate:
    """Importance-sampling estimate of the protection leg.

    ``prefactor`` is the tilted expectation ``I_N``; the returned ``mean`` is
    ``I_N exp(-N I)``, assembled in log space (the raw value may underflow).
    """
    tp = tilted if tilted is not None else tilt_pool(pool, tranche)
    pay, gamma = simulate(tp.base, tp.u_tilde, tranche, n_samples, seed, n_jobs)
    x = _payoff_values(pay, gamma, payoff) * np.where(gamma > 0, np.exp(-tp.lam * np.maximum(gamma, 0)), 0.0)
    n_eff = int(np.count_nonzero(gamma > 0))
    if n_eff == 0:
        raise ValueError("no tilted sample crossed the attachment point; increase n_samples "
                         "(tilted default count is centred on the attachment point)")
    i_n, i_se = _mean_se(x)
    log_exp = -tp.N * tp.rate
    log_mean = math.log(i_n) + log_exp if i_n > 0 else -math.inf
    scale = math.exp(log_exp)
    return McEstimate("importance", int(n_samples), int(seed), i_n * scale, i_se * scale, log_mean,
                      prefactor=i_n, prefactor_se=i_se, log_exponent=log_exp, lam=tp.lam,
                      n_effective=n_eff)


# ---------------------------------------------------------------------------
# exact default-count law and local CLT
# ---------------------------------------------------------------------------


def poisson_binomial_pmf(probs) -> np.ndarray:
    """Exact law of a sum of independent Bernoulli variables, by convolution."""
    probs = np.asarray(probs, dtype=float).ravel()
    if probs.size > 100_000:
        raise ValueError("poisson_binomial_pmf is capped at 1e5 names")
    if np.any((probs < 0) | (probs > 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    pmf = np.zeros(probs.size + 1)
    pmf[0] = 1.0
    for k, p in enumerate(probs, start=1):
        pmf[1:k + 1] = pmf[1:k + 1] * (1.0 - p) + pmf[0:k] * p
        pmf[0] *= 1.0 - p
    return pmf


@dataclass(frozen=True)
class CltReport:
    N: int
    sigma_sq: float
    max_rel_error: float
    rows: tuple  # (s, exact, clt, rel_error)


def local_clt_check(tilted_probs, alpha, N=None, sigma_sq=None) -> CltReport:
    """Compare the exact tilted law of ``gamma_N`` with ``1/sqrt(2 pi N s2)``.

    Uses every ``s = count - N alpha`` in ``[0, N^{1/4}]``.  ``sigma_sq``
    defaults to the average Bernoulli variance of the tilted names.
    """
    probs = np.asarray(tilted_probs, dtype=float)
    N = probs.size if N is None else int(N)
    if N != probs.size:
        raise ValueError("N must equal the number of tilted probabilities")
    if sigma_sq is None:
        sigma_sq = float(np.mean(probs * (1.0 - probs)))
    if not sigma_sq > 0:
        raise ValueError("variance factor must be positive")
    pmf = poisson_binomial_pmf(probs)
    attach = _attach_count(N, alpha)
    clt = 1.0 / math.sqrt(2 * math.pi * N * sigma_sq)
    rows = []
    c = math.ceil(attach)
    while c <= N and c - attach <= N**0.25:
        exact = float(pmf[c])
        rows.append((c - attach, exact, clt, abs(exact / clt - 1.0)))
        c += 1
    worst = max(r[3] for r in rows) if rows else math.nan
    return CltReport(N, sigma_sq, worst, tuple(rows))


# ---------------------------------------------------------------------------
# conditional payoff given the overshoot
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HnRow:
    s: float
    conditional_mean: float
    count: int
    reference: float
    ratio: float
    flagged: bool


HN_COLUMNS = ("s", "conditional_mean", "count", "reference", "ratio", "flagged")


def hn_empirical(pool: PoolSpec, tranche: TrancheSpec, n_samples, seed, n_jobs=None,
                 tilted: TiltedPool | None = None) -> list[HnRow]:
    """Tilted-sample conditional mean of the payoff for each overshoot ``s <= N^{1/4}``.

    The reference column is ``e^{-RT} s / (N (beta - alpha))``.  Bins with
    fewer than 30 samples are flagged and get no ratio.
    """
    tp = tilted if tilted is not None else tilt_pool(pool, tranche)
    pay, gamma = simulate(tp.base, tp.u_tilde, tranche, n_samples, seed, n_jobs)
    N = tp.N
    rows = []
    for s in np.unique(gamma[(gamma > 0) & (gamma <= N**0.25)]):
        sel = gamma == s
        cnt = int(sel.sum())
        ref = math.exp(-tranche.R * tranche.T) * s / (N * (tranche.beta - tranche.alpha))
        mean = float(pay[sel].mean())
        flagged = cnt < MIN_BIN_COUNT
        rows.append(HnRow(float(s), mean, cnt, ref, math.nan if flagged else mean / ref, flagged))
    return rows
