import numpy as np
import pytest

from greenview.labelspace import VOID, bundled_path, load_catalog


def random_labels(rng, shape, C, void_frac=0.1):
    y = rng.integers(0, C, shape)
    y[rng.random(shape) < void_frac] = VOID
    return y


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def camvid32():
    return load_catalog(bundled_path("camvid32_class_dict.csv"), bundled_path("greenery.txt"))


@pytest.fixture(scope="session")
def camvid7():
    return load_catalog(bundled_path("camvid7_class_dict.csv"), bundled_path("greenery.txt"))
