import numpy as np
import pytest

from config.settings import Config
from models.data_models import CTMCSpec
from models.densities import DensitySpec
from services import (DistributionCore, EntropyCalculator, EntropyEstimator, GoodnessChecker, ProcessEntropy,
                      ProcessSimulator, TransformCertifier)


@pytest.fixture
def config():
    return Config(PROBE_POINTS=2000, MAX_WORKERS=2)


@pytest.fixture
def core(config):
    return DistributionCore(config)


@pytest.fixture
def goodness(config):
    return GoodnessChecker(config)


@pytest.fixture
def entropy(config):
    return EntropyCalculator(config)


@pytest.fixture
def certifier(config, entropy):
    return TransformCertifier(config, entropy)


@pytest.fixture
def simulator(config):
    return ProcessSimulator(config)


@pytest.fixture
def processes(config, entropy):
    return ProcessEntropy(config, entropy)


@pytest.fixture
def estimator(config):
    return EntropyEstimator(config)


@pytest.fixture
def rng():
    return np.random.default_rng(20240101)


@pytest.fixture
def u02(core):
    """Uniform on [0, 2] injected with the constant label."""
    return core.inject_continuous(DensitySpec.uniform(0.0, 2.0))


@pytest.fixture
def fair_coin(core):
    return core.inject_discrete({'H': 0.5, 'T': 0.5})


@pytest.fixture
def single_state_chain():
    return CTMCSpec(lam=1.0, P=[[1.0]], initial=[1.0])


@pytest.fixture
def symmetric_chain():
    return CTMCSpec(lam=2.0, P=[[0.5, 0.5], [0.5, 0.5]], initial=[0.5, 0.5])


@pytest.fixture
def sticky_chain():
    # stationary law (2/3, 1/3)
    return CTMCSpec(lam=1.0, P=[[0.9, 0.1], [0.2, 0.8]], initial=[2 / 3, 1 / 3])
