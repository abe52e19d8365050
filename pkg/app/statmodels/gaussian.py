"""Gaussian location model with known scale.

Chart convention: theta is the location, and the model is written canonically
in theta with T(x) = x / sigma^2 and psi(theta) = theta^2 / (2 sigma^2). The
mean parameter of this family is grad psi(theta) = theta / sigma^2; Fisher
information is reported in both charts by ``fisher_charts``.
"""

import math
from typing import Dict, List, Optional

import numpy as np

from app.statmodels.base import AgentModel, box_muller
from app.utils.errors import NonpositiveScale

LOG_2PI = math.log(2.0 * math.pi)


class GaussianLocationModel(AgentModel):
    kind = "gaussian"
    canonical = True
    dim_theta = 1
    dim_stat = 1

    def __init__(self, sigma: float):
        if not sigma > 0 or not math.isfinite(sigma):
            raise NonpositiveScale(f"sigma must be positive and finite, got {sigma}")
        self.sigma = float(sigma)
        self.var = self.sigma ** 2

    def __repr__(self):
        return f"GaussianLocationModel(sigma={self.sigma!r})"

    def suff_stat(self, x) -> np.ndarray:
        return np.array([float(x) / self.var])

    def base_log_density(self, x) -> float:
        return -float(x) ** 2 / (2.0 * self.var) - 0.5 * (LOG_2PI + math.log(self.var))

    def psi(self, theta, covariate=None) -> float:
        theta = float(np.asarray(theta).reshape(-1)[0])
        return theta * theta / (2.0 * self.var)

    def grad_psi(self, theta, covariate=None) -> np.ndarray:
        return np.atleast_1d(np.asarray(theta, dtype=float)) / self.var

    def hess_psi(self, theta, covariate=None) -> np.ndarray:
        return np.array([[1.0 / self.var]])

    def batch_psi(self, thetas, weights, covariates=None) -> np.ndarray:
        thetas = np.asarray(thetas, dtype=float)
        return float(np.sum(weights)) * thetas[:, 0] ** 2 / (2.0 * self.var)

    def loglik_grid(self, nodes: np.ndarray):
        """Closure x -> log p_theta(x) over a fixed (G, 1) array of locations"""
        locations = np.asarray(nodes, dtype=float)[:, 0]
        offset = -0.5 * (LOG_2PI + math.log(self.var))

        def evaluate(x):
            return -(float(x) - locations) ** 2 / (2.0 * self.var) + offset

        return evaluate

    def sample(self, theta, u: np.ndarray) -> List[float]:
        theta = float(np.asarray(theta).reshape(-1)[0])
        z = box_muller(u[:, 0], u[:, 1])
        return list(theta + self.sigma * z)

    def sample_from(self, mean: float, sd: float, u: np.ndarray) -> List[float]:
        """Draws from N(mean, sd^2); used when the truth differs from the model"""
        return list(mean + sd * box_muller(u[:, 0], u[:, 1]))

    def fisher_charts(self, theta=None) -> Dict[str, float]:
        return {"location": 1.0 / self.var, "mean_parameter": self.var}


def gaussian_location_model(sigma: float) -> GaussianLocationModel:
    return GaussianLocationModel(sigma)


def gaussian_kl(mean_p: float, var_p: float, mean_q: float, var_q: float) -> float:
    """KL(N(mean_p, var_p) || N(mean_q, var_q))"""
    return 0.5 * (
        (mean_p - mean_q) ** 2 / var_q + var_p / var_q - 1.0 - math.log(var_p / var_q)
    )


def gaussian_entropy(var: float) -> float:
    return 0.5 * (1.0 + LOG_2PI + math.log(var))
