"""Posterior mass of neighborhoods of the truth."""

import logging
import math

import numpy as np
from scipy.stats import norm

from app.belief.grid import GridBelief
from app.belief.natural import NaturalBelief
from app.statmodels.gaussian import GaussianLocationModel
from app.statmodels.truth import GaussianMisspecifiedTruth, average_kl
from app.utils.errors import UnsupportedModel

logger = logging.getLogger(__name__)

LATTICE = 201


def _truth_moments(truth, models):
    if isinstance(truth, GaussianMisspecifiedTruth):
        return truth.mean0, [truth.sigma0 ** 2] * len(models)
    return float(truth.theta0[0]), [model.var for model in models]


def kl_interval(truth, models, eps: float):
    """The KL neighborhood {theta : (1/m) sum_j KL(P0 || P^j_theta) < eps} of Gaussian agents.

    The average KL is a(theta - mean0)^2 + c, so the neighborhood is an
    interval around mean0, empty when eps <= c.
    """
    mean0, vars0 = _truth_moments(truth, models)
    a = float(np.mean([0.5 / model.var for model in models]))
    c = float(np.mean([
        0.5 * (v0 / model.var - 1.0 - math.log(v0 / model.var)) for v0, model in zip(vars0, models)
    ]))
    if eps <= c:
        return None
    half = math.sqrt((eps - c) / a)
    return mean0 - half, mean0 + half


def consistency_mass(belief, truth, models, eps: float, neighborhood: str = "kl") -> float:
    """Posterior mass of the eps-neighborhood of the truth.

    ``neighborhood="kl"`` uses the average-KL set, in closed form for Gaussian
    agents and on a lattice otherwise; ``"distance"`` uses the Euclidean ball
    around the KL-minimizing parameter, the substitute for detection.
    """
    if math.isinf(eps):
        return 1.0
    target = truth.target()
    gaussian_agents = all(isinstance(model, GaussianLocationModel) for model in models)

    if isinstance(belief, NaturalBelief) and belief.is_gaussian:
        mean, cov = belief.gaussian_params()
        sd = math.sqrt(cov[0, 0])
        if neighborhood == "kl":
            interval = kl_interval(truth, models, eps)
            if interval is None:
                return 0.0
            lo, hi = interval
        else:
            lo, hi = target[0] - eps, target[0] + eps
        return float(norm.cdf((hi - mean[0]) / sd) - norm.cdf((lo - mean[0]) / sd))

    grid = belief if isinstance(belief, GridBelief) else GridBelief.rasterize_natural(belief, n=LATTICE, refine=False)
    nodes = grid.nodes()
    if neighborhood == "distance":
        mask = np.linalg.norm(nodes - target, axis=1) < eps
    elif gaussian_agents:
        interval = kl_interval(truth, models, eps)
        if interval is None:
            return 0.0
        mask = (nodes[:, 0] > interval[0]) & (nodes[:, 0] < interval[1])
    elif neighborhood == "kl":
        logger.debug("evaluating the KL neighborhood on %d lattice nodes", len(nodes))
        mask = np.array([average_kl(truth, models, node) < eps for node in nodes])
    else:
        raise UnsupportedModel(f"unknown neighborhood '{neighborhood}'")
    return grid.mass_where(mask)
