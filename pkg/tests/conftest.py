import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from synthdata import make_microstructure


@pytest.fixture(scope="session")
def micro():
    """The 300x300 synthetic micrograph shared by the slower tests."""
    image, labels = make_microstructure(size=300, seed=11)
    return image, labels


@pytest.fixture
def rng():
    return np.random.default_rng(123)
