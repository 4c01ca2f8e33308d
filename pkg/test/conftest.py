import pytest

from amodalforge.config import GenerationConfig
from amodalforge.sprites import procedural_library, procedural_backgrounds


@pytest.fixture(scope='session')
def small_library():
    # Radius 10 sprites, small enough for 64x64 scenes
    return procedural_library(nCategories=3, spritesPerCategory=4, seed=0, size=10)


@pytest.fixture(scope='session')
def small_backgrounds():
    return procedural_backgrounds(n=2, canvas=(64, 64), seed=0)


@pytest.fixture
def small_config():
    return GenerationConfig(canvas=(64, 64), minInstances=2, maxInstances=5, scaleRange=(0.6, 1.2), count=10, seed=3)
