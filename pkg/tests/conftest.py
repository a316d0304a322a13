import numpy as np
import pytest

from pclora.trainer import builtin_teacher


@pytest.fixture(scope="session")
def spirals():
    """Trained spirals teacher with its train/eval splits."""
    return builtin_teacher("spirals")


@pytest.fixture(scope="session")
def tokens():
    """Trained tiny-transformer teacher on the token order task."""
    return builtin_teacher("tokens")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
