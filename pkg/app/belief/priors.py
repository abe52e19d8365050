"""Priors and their 1/m geometric-mean merge."""

import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from app.utils.errors import ModelError, SupportMismatch


@dataclass(frozen=True, eq=False)
class GaussianPrior:
    """N(mean, cov), held in natural form (u = cov^-1 mean, precision)"""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ModelError(f"prior covariance shape {cov.shape} does not match mean size {mean.size}")
        np.linalg.cholesky(cov)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @classmethod
    def isotropic(cls, dim: int, var: float = 1.0, center: float = 0.0) -> "GaussianPrior":
        return cls(np.full(dim, center), var * np.eye(dim))

    @classmethod
    def from_natural(cls, u: np.ndarray, precision: np.ndarray) -> "GaussianPrior":
        cov = np.linalg.inv(precision)
        return cls(cov @ u, cov)

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def precision(self) -> np.ndarray:
        return np.linalg.inv(self.cov)

    @property
    def u(self) -> np.ndarray:
        return self.precision @ self.mean

    def log_density(self, theta) -> float:
        diff = np.atleast_1d(np.asarray(theta, dtype=float)) - self.mean
        _, logdet = np.linalg.slogdet(self.cov)
        return float(-0.5 * (diff @ self.precision @ diff + logdet + self.dim * math.log(2 * math.pi)))

    def log_density_batch(self, thetas) -> np.ndarray:
        diff = np.asarray(thetas, dtype=float).reshape(-1, self.dim) - self.mean
        _, logdet = np.linalg.slogdet(self.cov)
        quad = np.einsum("gi,ij,gj->g", diff, self.precision, diff)
        return -0.5 * (quad + logdet + self.dim * math.log(2 * math.pi))

    def log_density_derivatives(self, theta) -> Tuple[float, np.ndarray, np.ndarray]:
        diff = np.atleast_1d(np.asarray(theta, dtype=float)) - self.mean
        precision = self.precision
        return self.log_density(theta), -precision @ diff, -precision

    def contains(self, theta) -> bool:
        return True

    def mode(self) -> np.ndarray:
        return self.mean.copy()


@dataclass(frozen=True, eq=False)
class UniformPrior:
    """Uniform on an axis-aligned box"""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.shape != upper.shape or np.any(upper <= lower):
            raise ModelError("uniform prior needs lower < upper in every coordinate")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def unit_square(cls) -> "UniformPrior":
        return cls(np.zeros(2), np.ones(2))

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    def contains(self, theta) -> bool:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        return bool(np.all(theta >= self.lower) and np.all(theta <= self.upper))

    def log_density(self, theta) -> float:
        return -math.log(self.volume) if self.contains(theta) else -math.inf

    def log_density_batch(self, thetas) -> np.ndarray:
        thetas = np.asarray(thetas, dtype=float).reshape(-1, self.dim)
        inside = np.all((thetas >= self.lower) & (thetas <= self.upper), axis=1)
        return np.where(inside, -math.log(self.volume), -np.inf)

    def log_density_derivatives(self, theta) -> Tuple[float, np.ndarray, np.ndarray]:
        return self.log_density(theta), np.zeros(self.dim), np.zeros((self.dim, self.dim))

    def mode(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)


def prior_merge(priors: Sequence):
    """Normalized 1/m geometric mean of the agents' priors"""
    if not priors:
        raise ModelError("no priors to merge")
    first = priors[0]
    if all(isinstance(p, GaussianPrior) for p in priors):
        if len({p.dim for p in priors}) != 1:
            raise SupportMismatch("Gaussian priors of different dimension")
        u = np.mean([p.u for p in priors], axis=0)
        precision = np.mean([p.precision for p in priors], axis=0)
        if all(np.array_equal(p.mean, first.mean) and np.array_equal(p.cov, first.cov) for p in priors):
            return first
        return GaussianPrior.from_natural(u, precision)
    if all(isinstance(p, UniformPrior) for p in priors):
        for p in priors[1:]:
            if not (np.array_equal(p.lower, first.lower) and np.array_equal(p.upper, first.upper)):
                raise SupportMismatch("uniform priors on different boxes have no common normalization")
        return first
    raise SupportMismatch("cannot merge Gaussian priors with uniform priors")
