"""
Fixtures partagées: profils de bord, matériau constant et petites grilles
"""
import os

import numpy as np
import pytest

os.environ['PLATE_DOUBLING_ENV'] = 'testing'

from core.expressions import Expression  # noqa: E402
from core.geometry import BoundaryProfile  # noqa: E402
from core.material import LameField, derive_plate_constants, stiffness_tensor  # noqa: E402
from core.plate_solver import PlateProblem, domain_for  # noqa: E402


@pytest.fixture
def flat_profile():
    return BoundaryProfile.from_text('0')


@pytest.fixture
def curved_profile():
    return BoundaryProfile.from_text('0.05*x^2')


@pytest.fixture
def plate_constants():
    """lambda = 1, mu = 2, h = 0.1 (B = 4e-4, nu = 1/6)"""
    return derive_plate_constants(LameField.constant(1.0, 2.0, 0.1))


@pytest.fixture
def make_problem(plate_constants):
    def factory(profile, resolution, data, source=None):
        domain = domain_for(profile, resolution)
        return PlateProblem(domain, stiffness_tensor(plate_constants), Expression(data),
                            Expression(source) if source else None)
    return factory


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
