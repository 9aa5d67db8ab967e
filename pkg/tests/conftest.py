import numpy as np
import pytest
from hypothesis import strategies as st

from meanquant.measure import MeasureSample, make_measure


def random_measure(rng, n_atoms, d, radius=10.0, mass=None):
    """Uniform atoms in the cube inscribed in B(0, radius), random positive weights."""
    side = radius / np.sqrt(d)
    pts = rng.uniform(-side, side, size=(n_atoms, d))
    w = rng.uniform(0.1, 2.0, size=n_atoms)
    if mass is not None:
        w = w * (mass / w.sum())
    return make_measure(pts, w, radius)


def dirac_sample(points, radius=None, labels=None):
    """One unit Dirac measure per row of ``points``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if radius is None:
        radius = max(1.0, float(np.max(np.linalg.norm(pts, axis=1))) * 1.01)
    ms = [make_measure(p[None, :], [1.0], radius) for p in pts]
    return MeasureSample(tuple(ms), labels)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@st.composite
def measures(draw, max_atoms=8, dims=(1, 2, 3), radius=10.0):
    d = draw(st.sampled_from(dims))
    n = draw(st.integers(1, max_atoms))
    coord = st.floats(-radius / np.sqrt(d), radius / np.sqrt(d), allow_nan=False)
    pts = np.array(draw(st.lists(st.lists(coord, min_size=d, max_size=d), min_size=n, max_size=n)))
    w = draw(st.lists(st.floats(0.01, 5.0), min_size=n, max_size=n))
    return make_measure(pts, w, radius)


# one line per acceptance criterion, collected by tests/test_acceptance.py
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
