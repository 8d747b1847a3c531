import numpy as np
import pytest

from scripts.ckks import keygen
from scripts.load import RasterImage
from scripts.params import load_params

@pytest.fixture(scope='session')
def toy_params():
    return load_params('toy')

@pytest.fixture(scope='session')
def default_params():
    return load_params('default')

@pytest.fixture(scope='session')
def toy_keys(toy_params):
    return keygen(toy_params, seed=0)

@pytest.fixture(scope='session')
def default_keys(default_params):
    return keygen(default_params, seed=1)

@pytest.fixture
def rng():
    return np.random.default_rng(1234)

@pytest.fixture
def gray_image():
    # 4x4 gris con valores repetidos
    return RasterImage(np.array([[0, 10, 10, 255],
                                 [20, 20, 30, 40],
                                 [90, 90, 90, 90],
                                 [128, 7, 7, 250]], dtype=np.uint8))

@pytest.fixture
def rgb_image():
    rng = np.random.default_rng(7)
    return RasterImage(rng.integers(0, 256, size=(3, 3, 3), dtype=np.uint8))
