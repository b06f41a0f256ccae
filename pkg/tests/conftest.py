import pytest

from crra_alm.model import example_config


@pytest.fixture
def gamma_config():
    return example_config("gamma", rho=-0.6, eta=1.5)


@pytest.fixture
def pareto_config():
    return example_config("pareto", rho=0.3, eta=1.2)


@pytest.fixture
def no_claims_config():
    return example_config("gamma", rho=0.0, eta=1.0, lam=0.0)
