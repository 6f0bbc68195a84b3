import numpy as np
import pytest

from srlsoa import dogelog
from srlsoa._models import HsiCube, LabelMap
from srlsoa.hsi_data import flatten_pixels, normalize
from srlsoa.synthetic import planted_band_cube, planted_classification


@pytest.fixture(autouse=True)
def reset_logging():
    yield
    # tests that run the CLI may leave a log file open or debug mode on
    dogelog.init()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def counting_cube():
    """2 x 2 x 3 with the values 0..11, band-sequential."""
    return HsiCube(2, 2, 3, np.arange(12, dtype=np.float32))


@pytest.fixture
def planted():
    cube, bands = planted_band_cube(seed=0)
    return flatten_pixels(normalize(cube)), bands


@pytest.fixture
def small_classification():
    """400 pixels, 10 classes, 30 bands of which 3 separate the classes."""
    cube, labels, bands = planted_classification(seed=3, height=20, width=20,
            noise_bands=27)
    return cube, labels, bands


@pytest.fixture
def annotated_map():
    """4 x 5 map, classes 1..3, two unannotated pixels."""
    labels = np.array([
        [1, 1, 1, 2, 0],
        [1, 1, 2, 2, 3],
        [1, 2, 2, 3, 3],
        [1, 0, 2, 3, 3],
    ])
    return LabelMap(4, 5, labels)
