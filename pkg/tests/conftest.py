import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for oracles.py

from voxscope.phantom import Ellipsoid, generate_phantom, preset_hierarchy, preset_phantom


@pytest.fixture(scope="session")
def sphere_volume():
    """64^3 phantom with one centered r=10 ball labeled (2, 3)."""
    return preset_phantom("sphere", 64)


@pytest.fixture(scope="session")
def three_organ_volume():
    return preset_phantom("three-organs", 64)


@pytest.fixture(scope="session")
def hierarchy():
    return preset_hierarchy()


@pytest.fixture(scope="session")
def two_ball_volume():
    """Two disjoint balls with distinct organ labels, for interval tests."""
    organs = [
        Ellipsoid((16.0, 31.5, 31.5), (8.0, 8.0, 8.0), 2, 3),
        Ellipsoid((47.0, 31.5, 31.5), (8.0, 8.0, 8.0), 2, 4),
    ]
    return generate_phantom((64, 64, 64), (1.0, 1.0, 1.0), organs, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def sphere_mesh(sphere_volume):
    from voxscope.mesh import extract_mesh

    return extract_mesh(sphere_volume, (2, 3))


@pytest.fixture(scope="session")
def sphere_renderer(sphere_volume, hierarchy):
    from voxscope.mesh import extract_all_meshes
    from voxscope.render import Renderer

    return Renderer(sphere_volume, extract_all_meshes(sphere_volume), hierarchy)


@pytest.fixture(scope="session")
def two_ball_renderer(two_ball_volume, hierarchy):
    from voxscope.mesh import extract_all_meshes
    from voxscope.render import Renderer

    return Renderer(two_ball_volume, extract_all_meshes(two_ball_volume), hierarchy)


@pytest.fixture(scope="session")
def front_camera():
    from voxscope.scene import Camera

    return Camera(
        position=(32.0, 32.0, -40.0),
        forward=(0.0, 0.0, 1.0),
        up=(0.0, 1.0, 0.0),
        width=64,
        height=64,
        ipd_mm=8.0,
    )
