import logging

import numpy as np
import pytest

from contagion_sim.model import NameParams, PoolSpec, RiskKind, SimConfig, SystematicRiskModel, TimeGrid

SEED = 20240601


def make_pool(beta_c=2.0, beta_s=2.0, lambda0=0.2, lambda_bar=0.2, sigma=0.9, alpha=4.0, size=1):
    return PoolSpec.homogeneous(NameParams(alpha, lambda_bar, sigma, beta_c, beta_s), lambda0, size)


@pytest.fixture
def base_pool():
    return make_pool()


@pytest.fixture
def cir():
    return SystematicRiskModel(RiskKind.CIR, x0=0.5, kappa=4.0, theta=0.5, epsilon=0.5)


@pytest.fixture
def no_risk():
    return SystematicRiskModel(RiskKind.NONE, x0=0.0)


@pytest.fixture
def grid():
    return TimeGrid(0.01, 1.0)


@pytest.fixture
def sim():
    return SimConfig(trials=50, master_seed=SEED, parallelism=1)


@pytest.fixture
def rng():
    return np.random.default_rng(SEED)


@pytest.fixture(autouse=True)
def reset_package_logger():
    """CLI runs install handlers on the package logger; undo that between tests."""
    yield
    logger = logging.getLogger("contagion_sim")
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()
    logger.propagate = True
    logger.setLevel(logging.NOTSET)
