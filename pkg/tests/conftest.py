import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gaitrecon.camera import Camera, look_at

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def ring_rig(n=4, radius=4.0, height=1.5, k1=0.0, target=(0.0, 0.0, 1.0), size=(1920, 1200)):
    """Cameras evenly spaced on a circle, all facing ``target``."""
    cams = []
    for i in range(n):
        a = 2 * np.pi * i / n + 0.3
        center = np.array([radius * np.cos(a), radius * np.sin(a), height + 0.3 * (i % 2)])
        R, t = look_at(center, target)
        kk = k1 if np.isscalar(k1) else k1[i]
        cams.append(Camera(fx=1000.0, fy=1010.0, cx=size[0] / 2, cy=size[1] / 2, k1=kk,
                           rotation=R, translation=t, id=f"c{i}", width=size[0], height=size[1]))
    return cams


@pytest.fixture
def rig4():
    return ring_rig(4)


@pytest.fixture(scope="session")
def default_scene():
    from gaitrecon.synthetic import SceneSpec, make_scene

    return make_scene(SceneSpec())


def pytest_terminal_summary(terminalreporter):
    acc = sys.modules.get("test_acceptance")
    results = getattr(acc, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
