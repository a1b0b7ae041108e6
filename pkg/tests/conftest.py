import numpy as np
import pytest

from models import CellId, GridGeometry, PhenotypeTraits, SimConfig, TumourCell


@pytest.fixture
def params():
    return SimConfig()


@pytest.fixture
def geometry():
    return GridGeometry(100, 100)


@pytest.fixture
def small_geometry():
    return GridGeometry(10, 10)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def make_cell():
    def _make(x=0.505, y=0.505, root=1, path=(), **kwargs):
        traits = PhenotypeTraits(oxygen_uptake=0.57, proliferation_rate=np.log(2.0) / 0.625,
                                 death_threshold=kwargs.pop("threshold", 0.5))
        maturation = kwargs.pop("maturation", 0.625)
        return TumourCell(x=x, y=y, id=CellId(root, tuple(path)), traits=traits, base=traits.copy(),
                          maturation=maturation, **kwargs)
    return _make
