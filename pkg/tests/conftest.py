import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mfdepth import CameraIntrinsics, DepthMap, ImagePlane

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def K100():
    return CameraIntrinsics(100.0, 100.0, 64.0, 32.0)


def random_image(rng, h, w, c=3):
    return ImagePlane(rng.random((h, w, c)))


def random_depth(rng, h, w, lo=1.0, hi=20.0):
    return DepthMap(rng.uniform(lo, hi, (h, w)))
