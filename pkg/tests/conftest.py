import numpy as np
import pytest

from broadbeam.response import ArrayGeometry
from broadbeam.sampling import BandSpec

FS = 8000.0


def example_geometry():
    return ArrayGeometry.uniform(7, 0.04, FS)


def symmetric_band():
    return BandSpec.from_hz_deg(FS, (1500, 3500), (80, 100), ((0, 60), (120, 180)), 90)


def steered_band():
    return BandSpec.from_hz_deg(FS, (1500, 3500), (110, 130), ((0, 90), (150, 180)), 120)


@pytest.fixture
def geom():
    return example_geometry()


@pytest.fixture
def band():
    return symmetric_band()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
