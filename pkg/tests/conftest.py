import os

# allow >1 numba thread on single-core CI so thread-count determinism is a
# real test; must happen before numba is imported
os.environ.setdefault("NUMBA_NUM_THREADS", "4")

import numpy as np
import pytest

from splat4d.mathutil import quat_normalize
from splat4d.rasterizer import RenderConfig
from splat4d.splats import SplatCloud
from splat4d.synthetic import frame_cloud_pose, make_cloud, random_pose


def random_cloud(n: int, seed: int, with_sh_rest: bool = False) -> SplatCloud:
    """Randomized but invariant-respecting cloud for round-trip tests."""
    rng = np.random.default_rng(seed)
    kwargs = {}
    if with_sh_rest:
        kwargs["sh_rest"] = rng.normal(0.0, 0.5, size=(n, 9))
    return SplatCloud(
        positions=rng.uniform(-50.0, 50.0, size=(n, 3)),
        rotations=quat_normalize(rng.normal(size=(n, 4))),
        scales=np.exp(rng.uniform(np.log(1e-3), np.log(10.0), size=(n, 3))),
        opacities=rng.uniform(0.0, 1.0, size=n),
        colors=rng.uniform(0.0, 1.0, size=(n, 3)),
        **kwargs,
    )


@pytest.fixture(scope="session")
def fixture_scenes():
    """Five fixture scenes (10..1000 splats) with randomized poses."""
    sizes = [10, 50, 150, 400, 1000]
    scenes = []
    for i, n in enumerate(sizes):
        cloud = make_cloud(n, seed=100 + i)
        pose = random_pose(cloud, seed=200 + i)
        scenes.append((cloud, pose))
    return scenes


@pytest.fixture
def small_cfg():
    return RenderConfig(width=128, height=96, background=(0.1, 0.05, 0.2))


@pytest.fixture
def ball_scene():
    cloud = make_cloud(300, seed=42)
    return cloud, frame_cloud_pose(cloud)
