"""Agent model interface and the network-level natural chart.

An agent model is an exponential family, possibly curved:

    log p_theta(x) = h(x) + <eta(theta), T(x)> - psi(theta)

Canonical families have ``eta(theta) = theta`` and share one chart across the
network. Curved families (detection) give every agent its own slot in the
stacked natural statistic, so the network chart has one coordinate per agent.
"""

import logging
from abc import ABC, abstractmethod
from typing import Any, List, Optional, Sequence, Tuple

import numpy as np

from app.utils.errors import RepresentationMismatch

logger = logging.getLogger(__name__)


def box_muller(u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
    """Standard normal draws from two arrays of uniforms on [0, 1)"""
    radius = np.sqrt(-2.0 * np.log1p(-u1))
    return radius * np.cos(2.0 * np.pi * u2)


class AgentModel(ABC):
    """One agent's private statistical model"""

    kind: str = "abstract"
    canonical: bool = True
    dim_theta: int = 1
    dim_stat: int = 1

    @abstractmethod
    def suff_stat(self, x: Any) -> np.ndarray:
        """T(x) in the model's own chart"""

    @abstractmethod
    def base_log_density(self, x: Any) -> float:
        """h(x)"""

    @abstractmethod
    def psi(self, theta: np.ndarray, covariate: Optional[np.ndarray] = None) -> float:
        """Log-partition at theta"""

    @abstractmethod
    def grad_psi(self, theta: np.ndarray, covariate: Optional[np.ndarray] = None) -> np.ndarray:
        ...

    @abstractmethod
    def hess_psi(self, theta: np.ndarray, covariate: Optional[np.ndarray] = None) -> np.ndarray:
        ...

    @abstractmethod
    def sample(self, theta: np.ndarray, u: np.ndarray) -> List[Any]:
        """Draw observations at theta from an (n, k) block of uniforms"""

    def uniforms_per_draw(self) -> int:
        return 2

    def covariate_of(self, x: Any) -> Optional[np.ndarray]:
        """Covariate attached to the log-partition atom an observation creates"""
        return None

    def natural(self, theta: np.ndarray) -> np.ndarray:
        return np.atleast_1d(np.asarray(theta, dtype=float))

    def natural_jacobian(self, theta: np.ndarray) -> np.ndarray:
        return np.eye(self.dim_theta)

    def natural_hessians(self, theta: np.ndarray) -> np.ndarray:
        return np.zeros((self.dim_stat, self.dim_theta, self.dim_theta))

    def in_support(self, theta: np.ndarray) -> bool:
        return bool(np.all(np.isfinite(theta)))

    def observation_in_support(self, x: Any) -> bool:
        return True

    def weighted_psi(
        self,
        theta: np.ndarray,
        weights: np.ndarray,
        covariates: Optional[np.ndarray] = None,
    ) -> Tuple[float, np.ndarray, np.ndarray]:
        """Value, gradient and Hessian of sum_a weights[a] * psi_a(theta)"""
        total = float(np.sum(weights))
        if covariates is None:
            return (
                total * self.psi(theta),
                total * self.grad_psi(theta),
                total * self.hess_psi(theta),
            )
        value, grad, hess = 0.0, np.zeros(self.dim_theta), np.zeros((self.dim_theta, self.dim_theta))
        for weight, covariate in zip(weights, covariates):
            value += weight * self.psi(theta, covariate)
            grad = grad + weight * self.grad_psi(theta, covariate)
            hess = hess + weight * self.hess_psi(theta, covariate)
        return value, grad, hess

    def batch_natural(self, thetas: np.ndarray) -> np.ndarray:
        """eta at every row of a (G, p) parameter array"""
        return np.asarray(thetas, dtype=float)

    def batch_psi(self, thetas: np.ndarray, weights: np.ndarray, covariates: Optional[np.ndarray] = None) -> np.ndarray:
        """sum_a weights[a] psi_a at every row of a (G, p) parameter array"""
        return np.array([self.weighted_psi(theta, weights, covariates)[0] for theta in thetas])

    def loglik(self, theta: np.ndarray, x: Any) -> float:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        return float(
            self.base_log_density(x)
            + self.natural(theta) @ self.suff_stat(x)
            - self.psi(theta, self.covariate_of(x))
        )

    def fisher(self, theta: np.ndarray, covariate: Optional[np.ndarray] = None) -> np.ndarray:
        """Per-observation Fisher information in the theta chart"""
        jac = self.natural_jacobian(theta)
        return jac.T @ self._natural_fisher(theta, covariate) @ jac

    def _natural_fisher(self, theta: np.ndarray, covariate: Optional[np.ndarray]) -> np.ndarray:
        return self.hess_psi(theta, covariate)


class NetworkModel:
    """The agents' models viewed through one stacked natural chart.

    Attributes:
        models: one AgentModel per agent, all of the same kind
        shared_chart: True when every model is canonical in the same theta
        dim_stat: dimension of the network statistic chi
    """

    def __init__(self, models: Sequence[AgentModel]):
        if not models:
            raise RepresentationMismatch("a network needs at least one agent model")
        kinds = {model.kind for model in models}
        if len(kinds) != 1:
            raise RepresentationMismatch(f"agents must share a model kind, got {sorted(kinds)}")
        self.models = list(models)
        self.kind = self.models[0].kind
        self.m = len(self.models)
        self.dim_theta = self.models[0].dim_theta
        self.shared_chart = all(model.canonical for model in self.models)
        if self.shared_chart:
            self.dim_stat = self.dim_theta
            self._offsets = [0] * self.m
        else:
            sizes = [model.dim_stat for model in self.models]
            self._offsets = list(np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(int))
            self.dim_stat = int(np.sum(sizes))

    def slot(self, agent: int) -> slice:
        model = self.models[agent]
        start = self._offsets[agent]
        return slice(start, start + model.dim_stat)

    def suff_stat(self, agent: int, x: Any) -> np.ndarray:
        stat = np.zeros(self.dim_stat)
        stat[self.slot(agent)] = self.models[agent].suff_stat(x)
        return stat

    def natural(self, theta: np.ndarray) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if self.shared_chart:
            return theta.copy()
        return np.concatenate([model.natural(theta) for model in self.models])

    def natural_jacobian(self, theta: np.ndarray) -> np.ndarray:
        if self.shared_chart:
            return np.eye(self.dim_theta)
        return np.vstack([model.natural_jacobian(theta) for model in self.models])

    def natural_hessians(self, theta: np.ndarray) -> np.ndarray:
        if self.shared_chart:
            return np.zeros((self.dim_stat, self.dim_theta, self.dim_theta))
        return np.concatenate([model.natural_hessians(theta) for model in self.models])

    def batch_natural(self, thetas: np.ndarray) -> np.ndarray:
        thetas = np.asarray(thetas, dtype=float)
        if self.shared_chart:
            return thetas
        return np.hstack([model.batch_natural(thetas) for model in self.models])

    def in_support(self, theta: np.ndarray) -> bool:
        return all(model.in_support(theta) for model in self.models)
