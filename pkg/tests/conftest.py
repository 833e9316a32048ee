import numpy as np
import pytest

from condgen.rng import make_rng


@pytest.fixture
def rng():
    return make_rng(20240817)


def random_responses(rng: np.random.Generator, n: int, p: int) -> tuple[np.ndarray, np.ndarray]:
    """A (y, z) pair of comparable scale for estimator fixtures."""
    y = rng.standard_normal((n, p))
    z = y + 0.5 * rng.standard_normal((n, p))
    return y, z
