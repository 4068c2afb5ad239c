import pytest
from hypothesis import settings

from dosquant import bounds, catalog, dos

settings.register_profile("ci", derandomize=True, max_examples=60, deadline=None)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def paper_system():
    return catalog.get_system("paper-example")


@pytest.fixture(scope="session")
def paper_budget():
    return dos.DoSBudget(kappa=0.3, eta=1.3, T=2.222, tau_d=0.714)


@pytest.fixture(scope="session")
def paper_params(paper_system, paper_budget):
    model, cert = paper_system
    return bounds.derive(model, cert, paper_budget, 0.1, 0.65)
