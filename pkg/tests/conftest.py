import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from voxhand.kinematics import PoseParams, default_skeleton, sample_pose
from voxhand.render import RenderConfig, render_depth


@pytest.fixture(scope="session")
def skeleton():
    return default_skeleton()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def render_config():
    return RenderConfig.default(width=160, height=120)


@pytest.fixture(scope="session")
def fist_sample(skeleton, render_config):
    """A curled hand rendered at ~500mm, used by several template tests."""
    theta = PoseParams.rest(skeleton)
    for finger in ("index", "middle", "ring", "pinky"):
        theta[f"{finger}_mcp.bend"] = -1.0
        theta[f"{finger}_pip.bend"] = -1.1
        theta[f"{finger}_dip.bend"] = -0.9
    theta["thumb_cmc.bend"] = -0.5
    theta = theta.with_translation([0.0, 0.0, 500.0])
    return render_depth(theta, render_config, skeleton)


@pytest.fixture(scope="session")
def posed_sample(skeleton, render_config):
    """A random sampled pose rendered at ~550mm."""
    rng = np.random.default_rng(99)
    theta = sample_pose(rng, skeleton).with_translation([10.0, -20.0, 550.0])
    return render_depth(theta, render_config, skeleton)
