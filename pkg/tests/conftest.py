import numpy as np
import pytest

from emgmm import MixtureModel

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def two_comp_1d():
    return MixtureModel([[0.0], [4.0]], [0.5, 0.5])


def random_model(rng, M, d, r_min=None, scale=3.0):
    """Random mixture; if ``r_min`` is given the centers are rescaled to that separation."""
    centers = rng.normal(scale=scale, size=(M, d))
    if r_min is not None and M > 1:
        dist = np.linalg.norm(centers[:, None] - centers[None], axis=2)
        current = dist[np.triu_indices(M, 1)].min()
        centers *= r_min / current
    w = rng.uniform(0.5, 1.5, size=M)
    return MixtureModel(centers, w / w.sum())
