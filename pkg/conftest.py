import numpy as np
import pytest

from app.belief.priors import GaussianPrior, UniformPrior
from app.graph.schedule import GraphSchedule
from app.graph.topology import metropolis_weights, named_topology
from app.statmodels.base import NetworkModel
from app.statmodels.detection import DetectionModel
from app.statmodels.gaussian import GaussianLocationModel
from app.statmodels.truth import CorrectTruth

SENSORS = [(0.1, 0.1), (0.9, 0.2), (0.4, 0.9)]


@pytest.fixture
def ring4():
    return metropolis_weights(named_topology("ring", 4))


@pytest.fixture
def ring4_schedule(ring4):
    return GraphSchedule.static(ring4)


@pytest.fixture
def gaussian_network():
    return NetworkModel([GaussianLocationModel(1.0) for _ in range(4)])


@pytest.fixture
def standard_prior():
    return GaussianPrior.isotropic(1, 1.0)


@pytest.fixture
def gaussian_truth():
    return CorrectTruth(np.array([0.5]))


@pytest.fixture
def detection_network():
    return NetworkModel([DetectionModel(z, 0.1) for z in SENSORS])


@pytest.fixture
def unit_square():
    return UniformPrior.unit_square()


@pytest.fixture
def write_config(tmp_path):
    """Write TOML text to a file and return its path"""

    def write(text: str, name: str = "experiment.toml"):
        path = tmp_path / name
        path.write_text(text)
        return path

    return write
