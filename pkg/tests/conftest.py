import numpy as np
import pytest

from radarcount.core import RadarCube, SampleMeta


def make_cube(amplitudes, label=0, environment="A", activity="standing",
              seed=None):
    return RadarCube(amplitudes=np.asarray(amplitudes, dtype=np.float32),
                     meta=SampleMeta(label=label, environment=environment,
                                     activity=activity, seed=seed))


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def small_cube(rng):
    """60-frame cube with a quiet floor and a few fluctuating cells."""
    a = rng.normal(0.5, 0.005, size=(60, 12, 91))
    a[:, 5, 40] += 0.3 * np.sin(np.arange(60) * 0.9)
    a[:, 6, 41] += 0.25 * np.sin(np.arange(60) * 1.1 + 0.3)
    return make_cube(np.abs(a), label=1)
