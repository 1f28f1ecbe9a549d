import math

import numpy as np
import pytest

from evosc.core import SensorGeometry
from evosc.sim import Disks, OscillatorConfig, SceneSpec, simulate
from evosc.track import SAMPLE_DTYPE

OMEGA_50HZ = 100.0 * math.pi


@pytest.fixture(scope="session")
def geom64():
    return SensorGeometry(width=64, height=64)


@pytest.fixture(scope="session")
def disk_cfg():
    # circular motion: x leads y by a quarter turn
    return OscillatorConfig(
        amp_x_px=3.0, amp_y_px=3.0, omega=OMEGA_50HZ, phi_x=0.0, phi_y=-math.pi / 2.0
    )


@pytest.fixture(scope="session")
def disk_stream(geom64, disk_cfg):
    """One bright disk at frame centre under circular camera oscillation, 1 s."""
    scene = SceneSpec(pattern=Disks(pitch_px=1000.0, offset_px=32.0), contrast=2.0)
    return simulate(scene, disk_cfg, geom64, duration_s=1.0, seed=7)


@pytest.fixture
def make_sine_samples():
    """Factory for tracker-sample arrays drawn from a + b parameterized sinusoid."""

    def build(omega, a, b, c, n=500, t_span_s=1.0, noise=0.0, seed=0, axis="u"):
        rng = np.random.default_rng(seed)
        t_us = np.sort(rng.integers(0, int(t_span_s * 1e6), n).astype(np.uint64))
        t = t_us * 1e-6
        z = a * np.sin(omega * t) + b * np.cos(omega * t) + c
        if noise:
            z = z + rng.normal(0.0, noise, n)
        out = np.zeros(n, dtype=SAMPLE_DTYPE)
        out["t"] = t_us
        out[axis] = z
        return out

    return build
