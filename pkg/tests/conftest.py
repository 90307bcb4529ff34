import hypothesis
import numpy as np
import pytest

from conesqp import registry

hypothesis.settings.register_profile(
    "default", max_examples=60, deadline=None, derandomize=True
)
hypothesis.settings.load_profile("default")


@pytest.fixture(scope="session")
def reg():
    return registry.registry()


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
