"""Average Fisher information and the population-level losses at a parameter."""

import logging
import math
from typing import Optional, Sequence

import numpy as np

from app.services.rng import Purpose, stream
from app.statmodels.base import AgentModel
from app.statmodels.detection import DetectionModel, log_cdf_diff, log_normal_pdf
from app.statmodels.gaussian import GaussianLocationModel
from app.statmodels.logistic import LogisticModel, sigmoid
from app.statmodels.truth import average_kl, truth_entropy
from app.utils.errors import SingularFisher, UnsupportedModel

logger = logging.getLogger(__name__)

MAX_CONDITION = 1e12
COVARIATE_DRAWS = 20000


def logistic_fisher(theta, covariates: np.ndarray) -> np.ndarray:
    """X^T W(theta) X / t for one agent's (t, p) covariate block"""
    covariates = np.atleast_2d(np.asarray(covariates, dtype=float))
    s = sigmoid(covariates @ np.asarray(theta, dtype=float))
    return (covariates * (s * (1.0 - s))[:, None]).T @ covariates / len(covariates)


def standard_covariates(dim: int, seed: int = 0, draws: int = COVARIATE_DRAWS) -> np.ndarray:
    """Fixed N(0, I) covariate sample for the population logistic Fisher"""
    return stream(seed, Purpose.COVARIATE).standard_normal((draws, dim))


def check_conditioning(matrix: np.ndarray) -> np.ndarray:
    cond = np.linalg.cond(matrix)
    if not math.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularFisher(
            f"average Fisher information has condition number {cond:.3g}",
            {"matrix": np.asarray(matrix).tolist()},
        )
    return matrix


def average_fisher(
    models: Sequence[AgentModel],
    theta,
    covariates: Optional[Sequence[np.ndarray]] = None,
    seed: int = 0,
) -> np.ndarray:
    """(1/m) sum_i V^i(theta).

    Logistic agents use the empirical X^T W X / t of their own covariates
    when ``covariates`` (one (t, p) block per agent) is given, and a fixed
    standard-normal covariate sample otherwise. Detection agents use the
    Fisher information of the truncated reading.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    total = np.zeros((theta.size, theta.size))
    shared = None
    for j, model in enumerate(models):
        if isinstance(model, LogisticModel):
            if covariates is not None:
                block = covariates[j]
            else:
                if shared is None:
                    shared = standard_covariates(model.dim_theta, seed)
                block = shared
            total += logistic_fisher(theta, block)
        else:
            total += model.fisher(theta)
    return check_conditioning(total / len(models))


def published_detection_fisher(models: Sequence[DetectionModel], theta) -> np.ndarray:
    """Closed-form detection matrix (1/m) sum_j u u^T / sigma^4 * r_j^2.

    r_j = [phi(b) - phi(a)] / [Phi(b) - Phi(a)] is the standardized mean shift
    of the truncated reading, not its variance, so this is not the Fisher
    information of the truncated model. r_j vanishes for sensors whose
    truncation lies many sigma from the mean, which can leave the matrix
    nearly rank one while a single close truncation inflates it.
    Kept for comparison only; ``average_fisher`` is what the diagnostics use.
    """
    theta = np.asarray(theta, dtype=float)
    total = np.zeros((2, 2))
    for model in models:
        if not isinstance(model, DetectionModel):
            raise UnsupportedModel(f"{model!r} is not a detection sensor")
        mu, u = model.direction(theta)
        a, b = model.limits(mu)
        log_z = log_cdf_diff(a, b)
        ratio = math.exp(float(log_normal_pdf(b)) - log_z) - math.exp(float(log_normal_pdf(a)) - log_z)
        total += np.outer(u, u) / model.var ** 2 * ratio ** 2
    return total / len(models)


def network_loss(ideal_belief, theta):
    """f_t at theta: the surrogate loss of the ideal posterior"""
    return ideal_belief.agent_loss(theta)


def population_loss(truth, models: Sequence[AgentModel], theta) -> float:
    """(1/m) sum_j E0[-log p^j_theta(X)] = entropy of P0 + average KL, Gaussian agents only"""
    if not all(isinstance(model, GaussianLocationModel) for model in models):
        raise UnsupportedModel("the population loss has a closed form for Gaussian agents only")
    return truth_entropy(truth, models) + average_kl(truth, models, theta)
