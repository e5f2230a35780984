import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make oracles importable

from lensqc import bundled_base_paths, load_image


@pytest.fixture(scope="session")
def base_paths():
    return bundled_base_paths()


@pytest.fixture(scope="session")
def textured(base_paths):
    """A 96x96 crop of a real photograph, plenty of edges and texture."""
    camera = next(p for p in base_paths if p.name == "camera.png")
    return load_image(camera)[96:192, 96:192]


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
