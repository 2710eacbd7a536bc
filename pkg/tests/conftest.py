import os
import sys

import numpy as np
import pytest

SRC = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'periodic-evans')
if SRC not in sys.path:
    sys.path.insert(0, SRC)

from fourier_coeffs import SpectralProblem  # noqa: E402

PROBLEMS_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'problems')


def load(name: str) -> SpectralProblem:
    return SpectralProblem.from_file(os.path.join(PROBLEMS_DIR, name))


@pytest.fixture(scope='session')
def free_scalar() -> SpectralProblem:
    return load('free_scalar.json')


@pytest.fixture(scope='session')
def mathieu_q05() -> SpectralProblem:
    return load('mathieu_q05.json')


@pytest.fixture(scope='session')
def mathieu_q1() -> SpectralProblem:
    return load('mathieu_q1.json')


@pytest.fixture(scope='session')
def system_2x2() -> SpectralProblem:
    return load('system_2x2.json')


@pytest.fixture(scope='session')
def complex_scalar() -> SpectralProblem:
    return load('complex_scalar.json')


@pytest.fixture(params=['free_scalar.json', 'mathieu_q05.json', 'system_2x2.json', 'complex_scalar.json'])
def sample_problem(request) -> SpectralProblem:
    return load(request.param)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)
