"""Logistic regression agents.

Each observation d = (x, y) contributes T(d) = x * y and a log-partition atom
softplus(<theta, x>) that depends on its own covariate, so beliefs over this
model carry one weight per observation rather than one per agent.
"""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np

from app.statmodels.base import AgentModel, box_muller
from app.utils.errors import ModelError, ResultsIOError

logger = logging.getLogger(__name__)

SOFTPLUS_SWITCH = 30.0


@dataclass(frozen=True)
class LogisticData:
    x: np.ndarray
    y: int

    def __post_init__(self):
        if self.y not in (0, 1):
            raise ModelError(f"logistic labels must be 0 or 1, got {self.y!r}")
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))


def softplus(eta):
    """log(1 + exp(eta)) with the linear branch above |eta| > 30"""
    eta = np.asarray(eta, dtype=float)
    out = np.where(
        eta > SOFTPLUS_SWITCH,
        eta + np.log1p(np.exp(-np.abs(eta))),
        np.log1p(np.exp(np.minimum(eta, SOFTPLUS_SWITCH))),
    )
    return out if out.ndim else float(out)


def sigmoid(eta):
    eta = np.asarray(eta, dtype=float)
    e = np.exp(-np.abs(eta))
    out = np.where(eta >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return out if out.ndim else float(out)


def logistic_loglik(theta, d: LogisticData) -> float:
    """<theta, x y> - log(1 + exp(<theta, x>))"""
    eta = float(np.dot(np.asarray(theta, dtype=float), d.x))
    return d.y * eta - softplus(eta)


class LogisticModel(AgentModel):
    kind = "logistic"
    canonical = True

    def __init__(self, dim: int):
        if dim < 1:
            raise ModelError(f"covariate dimension must be at least 1, got {dim}")
        self.dim_theta = int(dim)
        self.dim_stat = int(dim)

    def __repr__(self):
        return f"LogisticModel(dim={self.dim_theta})"

    def suff_stat(self, d: LogisticData) -> np.ndarray:
        return d.x * d.y

    def base_log_density(self, d: LogisticData) -> float:
        return 0.0

    def covariate_of(self, d: LogisticData) -> np.ndarray:
        return d.x

    def observation_in_support(self, d) -> bool:
        return isinstance(d, LogisticData) and d.x.shape == (self.dim_theta,)

    def psi(self, theta, covariate=None) -> float:
        return float(softplus(float(np.dot(theta, covariate))))

    def grad_psi(self, theta, covariate=None) -> np.ndarray:
        return sigmoid(float(np.dot(theta, covariate))) * np.asarray(covariate, dtype=float)

    def hess_psi(self, theta, covariate=None) -> np.ndarray:
        s = sigmoid(float(np.dot(theta, covariate)))
        x = np.asarray(covariate, dtype=float)
        return s * (1.0 - s) * np.outer(x, x)

    def weighted_psi(self, theta, weights, covariates=None):
        theta = np.asarray(theta, dtype=float)
        weights = np.asarray(weights, dtype=float)
        if covariates is None or len(weights) == 0:
            return 0.0, np.zeros(self.dim_theta), np.zeros((self.dim_theta, self.dim_theta))
        eta = covariates @ theta
        s = sigmoid(eta)
        value = float(weights @ softplus(eta))
        grad = covariates.T @ (weights * s)
        hess = (covariates * (weights * s * (1.0 - s))[:, None]).T @ covariates
        return value, grad, hess

    def batch_psi(self, thetas, weights, covariates=None, chunk: int = 512) -> np.ndarray:
        thetas = np.asarray(thetas, dtype=float)
        if covariates is None or len(weights) == 0:
            return np.zeros(len(thetas))
        out = np.empty(len(thetas))
        for start in range(0, len(thetas), chunk):
            block = thetas[start:start + chunk]
            out[start:start + chunk] = weights @ softplus(covariates @ block.T)
        return out

    def loglik(self, theta, d: LogisticData) -> float:
        return logistic_loglik(theta, d)

    def sample(self, theta, u: np.ndarray) -> List[LogisticData]:
        """Covariates N(0, I_p) by Box-Muller, labels Bernoulli(sigmoid(<theta, x>))"""
        p = self.dim_theta
        theta = np.asarray(theta, dtype=float)
        out = []
        for row in u:
            x = box_muller(row[0:p], row[p:2 * p])
            y = int(row[2 * p] < sigmoid(float(x @ theta)))
            out.append(LogisticData(x=x, y=y))
        return out

    def uniforms_per_draw(self) -> int:
        return 2 * self.dim_theta + 1


def write_logistic_csv(path: Union[str, Path], data: Sequence[LogisticData]):
    if not data:
        raise ResultsIOError(f"refusing to write empty dataset to {path}")
    p = len(data[0].x)
    try:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow([f"x{k + 1}" for k in range(p)] + ["y"])
            for d in data:
                writer.writerow([format(v, ".17g") for v in d.x] + [d.y])
    except OSError as e:
        raise ResultsIOError(f"could not write {path}: {e}") from e


def read_logistic_csv(path: Union[str, Path]) -> List[LogisticData]:
    try:
        with open(path, newline="") as f:
            reader = csv.reader(f)
            header = next(reader)
            if not header or header[-1] != "y":
                raise ModelError(f"{path}: last column must be 'y'")
            return [
                LogisticData(x=np.array([float(v) for v in row[:-1]]), y=int(row[-1]))
                for row in reader
                if row
            ]
    except OSError as e:
        raise ResultsIOError(f"could not read {path}: {e}") from e
