import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from acoustoptic.geometry import build_grids
from acoustoptic.media import MediaCoefficients, make_beam

settings.register_profile("pkg", deadline=None, max_examples=30,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("pkg")

TWO_PI = 2 * np.pi


@pytest.fixture(scope="session")
def small_grids():
    return build_grids(12, 12, 16)


@pytest.fixture(scope="session")
def fig_grids():
    """The reference configuration: unit square, 64x64 cells, 50 directions."""
    return build_grids(64, 64, 50)


def unit_media(grids, kn=1.0, sigma_a=0.0, sigma_s=1.0):
    return MediaCoefficients(sigma_a, sigma_s, kn, grids.spatial)


def x_beam(grids, h, region="all"):
    return make_beam((1.0, 0.0), h, grids.angular, region)


def random_media(rng, grids, kn=1.0):
    sa = rng.uniform(0.0, 0.5, grids.spatial.shape)
    ss = rng.uniform(0.5, 2.0, grids.spatial.shape)
    return MediaCoefficients(sa, ss, kn, grids.spatial)
