import numpy as np
import pytest
from hypothesis import settings

from gausstat.forces import ForceFieldSpec
from gausstat.geometry import PhasePoint, SystemSpec

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def random_point(rng, spec, scale=1.0):
    q = rng.uniform(0.0, 1.0, (spec.n_particles, spec.dim)) * spec.box
    p = scale * rng.standard_normal((spec.n_particles, spec.dim))
    return PhasePoint(q, p)


def color_field(mag, d=2, axis=0, charges="alternating", **kw):
    xi = np.zeros(d)
    xi[axis] = mag
    return ForceFieldSpec(1.0, 1.0, tuple(xi), charges, **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def torus16():
    return SystemSpec.at_density(16, 0.4)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k])
