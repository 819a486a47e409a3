import json
from pathlib import Path

import pytest

from cdo_ld.merton import GammaVolSpec, build_gamma_merton_pool, limiting_measure
from cdo_ld.pool import LossProbMeasure, PoolSpec, TabulatedDistribution, TrancheSpec

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

# gamma-volatility Merton pool used throughout the numerical section
THETA, K_BARRIER, HORIZON = 6.0, 0.857, 5.0
GAMMA = GammaVolSpec(scale=0.3, shape=2.0)


@pytest.fixture(scope="session")
def gamma_spec():
    return GAMMA


@pytest.fixture(scope="session")
def limit_measure():
    return limiting_measure(GAMMA, THETA, K_BARRIER, HORIZON)


@pytest.fixture(scope="session")
def merton_pool_300():
    return build_gamma_merton_pool(GAMMA, THETA, K_BARRIER, 300)


@pytest.fixture
def tranche():
    return TrancheSpec(0.1, 0.15, 0.05, 5.0, (1.0, 2.0, 3.0, 4.0, 5.0))


@pytest.fixture
def two_atom():
    return LossProbMeasure.from_atoms([0.02, 0.05], [1 / 3, 2 / 3])


def homogeneous_pool(N, q, T=5.0):
    return PoolSpec(tuple([TabulatedDistribution.from_default_prob(q, T)] * N))


def write_config(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path
