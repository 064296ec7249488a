import pytest

from ikm import problems


@pytest.fixture(scope="session")
def lasso_default():
    return problems.make_lasso(40, 100, 0.1, 0.1, 1)


@pytest.fixture(scope="session")
def quad_50():
    return problems.make_quadratic(50, 1.0, 10.0, 1)


@pytest.fixture(scope="session")
def tv_200():
    return problems.make_tv1d(200, 0.5, 1)


@pytest.fixture(scope="session")
def three_term_default():
    return problems.make_three_term(40, 100, 0.1, -1.0, 1.0, 1)
