"""Large-pool asymptotics for investment-grade CDO tranches."""

__version__ = "0.1.0"

from .asymptotics import (AsymptoticResult, granularity, i2_factor, lambda_curve, premium_leg,
                          protection_leg_asymptotic, spread_asymptotic, sstar_curve)
from .config import PricingConfig, load_config, parse_config
from .correlation import (SystemicMixture, SystemicState, copula_mixture, dominant_state,
                          gaussian_copula_grid, mixture_protection_leg)
from .entropy import (BoundaryCase, RateSolution, brute_force_rate, hbar, phi, rate_i, sigma_sq,
                      solve_lambda)
from .estimators import EntropicTilt, TrancheAsymptotics
from .exceptions import AssumptionError, CdoLdError, ConfigError, ConvergenceError, InfeasibleError
from .merton import (GammaVolSpec, MertonDistribution, MertonParams, build_gamma_merton_pool,
                     limiting_measure, merton_default_prob, merton_default_prob_closed)
from .montecarlo import (McEstimate, TiltedPool, estimate_protection_is, estimate_protection_plain,
                         hn_empirical, local_clt_check, poisson_binomial_pmf, tilt_pool)
from .pool import (DiscreteTimeDistribution, LossProbMeasure, PoolSpec, TabulatedDistribution,
                   TrancheSpec, assumption_report, build_loss_measure)

__all__ = [name for name in dir() if not name.startswith("_")]
