import pytest

from per3bp.explore import find_lyapunov, fit_section_charts, shoot_homoclinic

H0 = -1.5050906397016


@pytest.fixture(scope="session")
def orbit():
    return find_lyapunov(H0)


@pytest.fixture(scope="session")
def trace(orbit):
    return shoot_homoclinic(orbit)


@pytest.fixture(scope="session")
def chartset(trace):
    return fit_section_charts(trace)
