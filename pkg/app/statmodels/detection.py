"""Range-only target detection with truncated-normal distance readings.

Sensor j at location z observes the distance to a target at theta corrupted
by N(0, sigma^2) noise and truncated to [0, |z| + 1/2]. With mu = |theta - z|
the density is a curved exponential family in theta:

    eta(theta) = mu,  T(x) = x / sigma^2,
    psi(theta) = mu^2 / (2 sigma^2) + log Z(mu),
    Z(mu) = Phi((U - mu) / sigma) - Phi(-mu / sigma).
"""

import math
from typing import List, Tuple

import numpy as np
from scipy.special import erfc, log_ndtr, ndtri

from app.statmodels.base import AgentModel
from app.utils.errors import ModelError, NonpositiveScale, OutOfSupport

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
MIN_DISTANCE = 1e-12


def normal_cdf(x):
    return 0.5 * erfc(-np.asarray(x, dtype=float) / math.sqrt(2.0))


def log_normal_pdf(x):
    x = np.asarray(x, dtype=float)
    return -0.5 * x * x - LOG_SQRT_2PI


def log_cdf_diff(a, b):
    """log(Phi(b) - Phi(a)) for a < b, stable in both tails"""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        # left tail: factor out Phi(b)
        left = log_ndtr(b) + np.log1p(-np.exp(np.minimum(log_ndtr(a) - log_ndtr(b), 0.0)))
        # right tail by symmetry
        right = log_ndtr(-a) + np.log1p(-np.exp(np.minimum(log_ndtr(-b) - log_ndtr(-a), 0.0)))
        middle = np.log1p(-(normal_cdf(a) + normal_cdf(-b)))
    out = np.where(b <= 0.0, left, np.where(a >= 0.0, right, middle))
    return out if out.ndim else float(out)


class DetectionModel(AgentModel):
    kind = "detection"
    canonical = False
    dim_theta = 2
    dim_stat = 1

    def __init__(self, z, sigma: float):
        z = np.asarray(z, dtype=float)
        if z.shape != (2,) or np.any(z < 0) or np.any(z > 1):
            raise ModelError(f"sensor location must lie in [0,1]^2, got {z.tolist()}")
        if not sigma > 0 or not math.isfinite(sigma):
            raise NonpositiveScale(f"sigma must be positive and finite, got {sigma}")
        self.z = z
        self.sigma = float(sigma)
        self.var = self.sigma ** 2
        self.upper = float(np.linalg.norm(z)) + 0.5

    def __repr__(self):
        return f"DetectionModel(z={self.z.tolist()!r}, sigma={self.sigma!r})"

    # geometry

    def distance(self, theta) -> float:
        return max(float(np.linalg.norm(np.asarray(theta, dtype=float) - self.z)), MIN_DISTANCE)

    def direction(self, theta) -> Tuple[float, np.ndarray]:
        diff = np.asarray(theta, dtype=float) - self.z
        mu = max(float(np.linalg.norm(diff)), MIN_DISTANCE)
        return mu, diff / mu

    def limits(self, mu):
        return (0.0 - mu) / self.sigma, (self.upper - mu) / self.sigma

    # truncation algebra in the distance chart

    def log_normalizer(self, mu):
        a, b = self.limits(mu)
        return log_cdf_diff(a, b)

    def log_normalizer_derivatives(self, mu: float) -> Tuple[float, float, float]:
        """log Z(mu) and its first two derivatives"""
        a, b = self.limits(mu)
        log_z = log_cdf_diff(a, b)
        ra = math.exp(float(log_normal_pdf(a)) - log_z)
        rb = math.exp(float(log_normal_pdf(b)) - log_z)
        first = (ra - rb) / self.sigma
        second = (a * ra - b * rb) / self.var - first * first
        return log_z, first, second

    def psi_mu(self, mu: float) -> Tuple[float, float, float]:
        log_z, d1, d2 = self.log_normalizer_derivatives(mu)
        return mu * mu / (2.0 * self.var) + log_z, mu / self.var + d1, 1.0 / self.var + d2

    def truncated_mean(self, mu: float) -> float:
        _, d1, _ = self.log_normalizer_derivatives(mu)
        return mu + self.var * d1

    def truncated_variance(self, mu: float) -> float:
        """Var of the truncated reading, equal to sigma^4 * psi''(mu)"""
        return self.var * self.var * self.psi_mu(mu)[2]

    # exponential family interface

    def suff_stat(self, x) -> np.ndarray:
        return np.array([float(x) / self.var])

    def base_log_density(self, x) -> float:
        return -float(x) ** 2 / (2.0 * self.var) - math.log(self.sigma) - LOG_SQRT_2PI

    def natural(self, theta) -> np.ndarray:
        return np.array([self.distance(theta)])

    def natural_jacobian(self, theta) -> np.ndarray:
        _, u = self.direction(theta)
        return u[None, :]

    def natural_hessians(self, theta) -> np.ndarray:
        mu, u = self.direction(theta)
        return ((np.eye(2) - np.outer(u, u)) / mu)[None, :, :]

    def psi(self, theta, covariate=None) -> float:
        return self.psi_mu(self.distance(theta))[0]

    def grad_psi(self, theta, covariate=None) -> np.ndarray:
        mu, u = self.direction(theta)
        return self.psi_mu(mu)[1] * u

    def hess_psi(self, theta, covariate=None) -> np.ndarray:
        mu, u = self.direction(theta)
        _, d1, d2 = self.psi_mu(mu)
        uu = np.outer(u, u)
        return d2 * uu + d1 * (np.eye(2) - uu) / mu

    def batch_natural(self, thetas) -> np.ndarray:
        thetas = np.asarray(thetas, dtype=float)
        return np.maximum(np.linalg.norm(thetas - self.z, axis=1), MIN_DISTANCE)[:, None]

    def batch_psi(self, thetas, weights, covariates=None) -> np.ndarray:
        mu = self.batch_natural(thetas)[:, 0]
        return float(np.sum(weights)) * (mu * mu / (2.0 * self.var) + self.log_normalizer(mu))

    def _natural_fisher(self, theta, covariate) -> np.ndarray:
        return np.array([[self.psi_mu(self.distance(theta))[2]]])

    def uniforms_per_draw(self) -> int:
        return 1

    def in_support(self, theta) -> bool:
        theta = np.asarray(theta, dtype=float)
        return bool(theta.shape == (2,) and np.all(theta >= 0.0) and np.all(theta <= 1.0))

    def observation_in_support(self, x) -> bool:
        return 0.0 <= float(x) <= self.upper

    def loglik(self, theta, x) -> float:
        if not self.observation_in_support(x):
            raise OutOfSupport(f"distance {x} outside [0, {self.upper}]")
        mu = self.distance(theta)
        resid = (float(x) - mu) / self.sigma
        return -0.5 * resid * resid - math.log(self.sigma) - LOG_SQRT_2PI - self.log_normalizer(mu)

    def loglik_grid(self, nodes: np.ndarray):
        """Closure x -> log p_theta(x) over a fixed (G, 2) array of parameters"""
        mu = np.maximum(np.linalg.norm(nodes - self.z, axis=1), MIN_DISTANCE)
        offset = -math.log(self.sigma) - LOG_SQRT_2PI - self.log_normalizer(mu)

        def evaluate(x):
            resid = (float(x) - mu) / self.sigma
            return -0.5 * resid * resid + offset

        return evaluate

    def sample(self, theta, u: np.ndarray) -> List[float]:
        """Inverse-CDF draws of the truncated reading"""
        mu = self.distance(theta)
        return list(self.sample_truncated(mu, u[:, 0]))

    def sample_truncated(self, mu: float, u: np.ndarray) -> np.ndarray:
        a, b = self.limits(mu)
        # a < 0 always since mu >= MIN_DISTANCE
        lo, hi = normal_cdf(a), normal_cdf(b)
        draws = mu + self.sigma * ndtri(lo + u * (hi - lo))
        return np.clip(draws, 0.0, self.upper)


def detection_loglik(theta, x_dist: float, model: DetectionModel) -> float:
    return model.loglik(theta, x_dist)
