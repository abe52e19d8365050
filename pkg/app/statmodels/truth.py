"""The data-generating distribution P0 and its distance to the agents' models."""

import logging
import math
from dataclasses import dataclass
from typing import Any, List, Optional, Sequence

import numpy as np

from app.services.rng import OBSERVATION_BLOCK, monte_carlo_stream, observation_stream
from app.statmodels.base import AgentModel
from app.statmodels.detection import DetectionModel
from app.statmodels.gaussian import GaussianLocationModel, gaussian_kl
from app.statmodels.logistic import LogisticModel, sigmoid
from app.utils.errors import SupportMismatch, UnsupportedModel

logger = logging.getLogger(__name__)

DEFAULT_MC_DRAWS = 20000


@dataclass(frozen=True)
class CorrectTruth:
    """Every agent observes exactly its own model at theta0"""

    theta0: np.ndarray
    kind: str = "correct"

    def __post_init__(self):
        object.__setattr__(self, "theta0", np.atleast_1d(np.asarray(self.theta0, dtype=float)))

    def sample(self, model: AgentModel, agent: int, u: np.ndarray) -> List[Any]:
        return model.sample(self.theta0, u)

    def log_density(self, model: AgentModel, x: Any) -> float:
        return model.loglik(self.theta0, x)

    def target(self) -> np.ndarray:
        return self.theta0


@dataclass(frozen=True)
class GaussianMisspecifiedTruth:
    """Data are N(mean0, sigma0^2) for every agent regardless of its assumed scale"""

    mean0: float
    sigma0: float = 2.0
    kind: str = "misspecified"

    def sample(self, model: AgentModel, agent: int, u: np.ndarray) -> List[Any]:
        if not isinstance(model, GaussianLocationModel):
            raise UnsupportedModel("the misspecified truth only drives Gaussian location agents")
        return model.sample_from(self.mean0, self.sigma0, u)

    def log_density(self, model: AgentModel, x: Any) -> float:
        resid = (float(x) - self.mean0) / self.sigma0
        return -0.5 * resid * resid - math.log(self.sigma0) - 0.5 * math.log(2.0 * math.pi)

    def target(self) -> np.ndarray:
        """KL-minimizing location for every Gaussian agent"""
        return np.array([self.mean0])


def observation_block(
    model: AgentModel, truth, seed: int, replication: int, agent: int, block: int
) -> List[Any]:
    """Observations for steps block*256 + 1 .. (block + 1)*256 of one agent"""
    rng = observation_stream(seed, replication, agent, block)
    u = rng.random((OBSERVATION_BLOCK, model.uniforms_per_draw()))
    return truth.sample(model, agent, u)


def sample_observation(
    model: AgentModel, truth, agent: int, step: int, seed: int, replication: int = 0
) -> Any:
    """The observation agent j receives at step t (t >= 1) in a replication"""
    block, offset = divmod(step - 1, OBSERVATION_BLOCK)
    return observation_block(model, truth, seed, replication, agent, block)[offset]


class ObservationSource:
    """Streams one observation per agent per step, generating whole blocks at a time"""

    def __init__(self, models: Sequence[AgentModel], truth, seed: int, replication: int):
        self.models = list(models)
        self.truth = truth
        self.seed = seed
        self.replication = replication
        self._block = -1
        self._cache: List[List[Any]] = []

    def at(self, step: int) -> List[Any]:
        block, offset = divmod(step - 1, OBSERVATION_BLOCK)
        if block != self._block:
            self._cache = [
                observation_block(model, self.truth, self.seed, self.replication, j, block)
                for j, model in enumerate(self.models)
            ]
            self._block = block
        return [column[offset] for column in self._cache]


@dataclass(frozen=True)
class KLResult:
    value: float
    stderr: float
    method: str


def kl_to_model(truth, model: AgentModel, theta, seed: int = 0, draws: int = DEFAULT_MC_DRAWS) -> KLResult:
    """KL(P0 || P_theta) for one agent's model.

    Gaussian agents use the closed form; other pairs are estimated by Monte
    Carlo over draws from P0 and carry a standard error.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if isinstance(model, GaussianLocationModel):
        if isinstance(truth, GaussianMisspecifiedTruth):
            mean0, var0 = truth.mean0, truth.sigma0 ** 2
        else:
            mean0, var0 = float(truth.theta0[0]), model.var
        return KLResult(gaussian_kl(mean0, var0, float(theta[0]), model.var), 0.0, "closed_form")

    if isinstance(truth, GaussianMisspecifiedTruth):
        raise SupportMismatch(f"{model!r} is not absolutely continuous with a Gaussian truth")
    if not model.in_support(theta):
        raise SupportMismatch(f"theta={theta.tolist()} outside the support of {model!r}")

    rng = monte_carlo_stream(seed, 0)
    u = rng.random((draws, model.uniforms_per_draw()))
    data = truth.sample(model, 0, u)
    if isinstance(model, LogisticModel):
        # the covariate law is shared, so only the label KL remains
        x = np.array([d.x for d in data])
        p0 = sigmoid(x @ truth.theta0)
        p1 = sigmoid(x @ theta)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = p0 * (np.log(p0) - np.log(p1)) + (1 - p0) * (np.log1p(-p0) - np.log1p(-p1))
        terms = np.nan_to_num(terms, nan=0.0)
    else:
        terms = np.array([truth.log_density(model, x) - model.loglik(theta, x) for x in data])
    if not np.all(np.isfinite(terms)):
        raise SupportMismatch("P0 charges a region where the model density vanishes")
    stderr = float(terms.std(ddof=1) / math.sqrt(len(terms)))
    return KLResult(max(float(terms.mean()), 0.0), stderr, "monte_carlo")


def average_kl(truth, models: Sequence[AgentModel], theta, seed: int = 0) -> float:
    """(1/m) sum_j KL(P0 || P^j_theta)"""
    return float(np.mean([kl_to_model(truth, model, theta, seed).value for model in models]))


def truth_entropy(truth, models: Sequence[AgentModel]) -> float:
    """-E0 log p0 averaged over agents, closed form for Gaussian truths"""
    values = []
    for model in models:
        if isinstance(truth, GaussianMisspecifiedTruth):
            var0 = truth.sigma0 ** 2
        elif isinstance(model, GaussianLocationModel):
            var0 = model.var
        else:
            raise UnsupportedModel("closed-form entropy needs a Gaussian truth")
        values.append(0.5 * (1.0 + math.log(2.0 * math.pi * var0)))
    return float(np.mean(values))


def min_kl(truth, model: AgentModel) -> float:
    """inf over theta of KL(P0 || P_theta) for one agent"""
    if isinstance(truth, CorrectTruth):
        return 0.0
    if isinstance(model, GaussianLocationModel):
        ratio = truth.sigma0 ** 2 / model.var
        return 0.5 * (ratio - 1.0 - math.log(ratio))
    raise UnsupportedModel(f"no closed-form KL projection for {model!r}")
