import sys

import numpy as np
import pytest
from scipy import ndimage

from dynavo.geometry import CameraIntrinsics, StereoRig


def textured(shape=(120, 160), seed=0, sigma=2.0):
    """Smooth random texture in 0..255 with plenty of corners."""
    rng = np.random.default_rng(seed)
    img = ndimage.gaussian_filter(rng.random(shape), sigma)
    img = (img - img.min()) / (np.ptp(img) + 1e-12)
    return (img * 255.0).astype(np.float64)


def random_rotation(rng, max_angle=np.pi):
    from dynavo.trajectory import so3_exp
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return so3_exp(axis * rng.uniform(-max_angle, max_angle))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def intrinsics():
    return CameraIntrinsics(500.0, 500.0, 319.5, 239.5, 640, 480)


@pytest.fixture
def rig(intrinsics):
    return StereoRig(intrinsics, 0.3)


@pytest.fixture(scope="session")
def tiny_sequence(tmp_path_factory):
    """Six frames of the bundled demo scene at reduced resolution."""
    from dynavo.synth import demo_script_path, load_script, render_sequence
    script = load_script(demo_script_path()).with_changes(width=256, height=192, fx=200, frame_count=6)
    root = tmp_path_factory.mktemp("tiny") / "seq"
    render_sequence(script, root)
    return root


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
