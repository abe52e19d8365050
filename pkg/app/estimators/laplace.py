"""Laplace approximations of agent beliefs and chi-square credible ellipsoids."""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import gammainc

from app.estimators.fisher import average_fisher, check_conditioning
from app.estimators.newton import MEstimate, estimate_for_belief
from app.utils.errors import RepresentationMismatch, SingularFisher

logger = logging.getLogger(__name__)

QUANTILE_TOL = 1e-10
SYMMETRY_TOL = 1e-12


def chi2_cdf(q: float, df: int) -> float:
    if q <= 0.0:
        return 0.0
    return float(gammainc(0.5 * df, 0.5 * q))


def chi2_quantile(prob: float, df: int) -> float:
    """Inverse chi-square CDF by bisection on the regularized incomplete gamma"""
    if prob <= 0.0:
        return 0.0
    if prob >= 1.0:
        return math.inf
    lo, hi = 0.0, max(1.0, float(df))
    while chi2_cdf(hi, df) < prob:
        lo, hi = hi, 2.0 * hi
    mid = 0.5 * (lo + hi)
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        gap = chi2_cdf(mid, df) - prob
        if abs(gap) < QUANTILE_TOL:
            break
        if gap < 0.0:
            lo = mid
        else:
            hi = mid
    return mid


@dataclass(frozen=True, eq=False)
class LaplaceApprox:
    """N(center, fisher^-1 / t) around an M-estimate"""

    center: np.ndarray
    covariance: np.ndarray
    fisher: np.ndarray
    t: int
    information: str = "expected"

    def __post_init__(self):
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if np.max(np.abs(cov - cov.T), initial=0.0) > SYMMETRY_TOL * max(1.0, np.max(np.abs(cov))):
            logger.debug("symmetrizing Laplace covariance")
        cov = 0.5 * (cov + cov.T)
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as e:
            raise SingularFisher("Laplace covariance is not positive definite") from e
        object.__setattr__(self, "center", np.atleast_1d(np.asarray(self.center, dtype=float)))
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "fisher", np.atleast_2d(np.asarray(self.fisher, dtype=float)))

    @property
    def dim(self) -> int:
        return self.center.size

    def log_density(self, theta) -> float:
        diff = np.atleast_1d(np.asarray(theta, dtype=float)) - self.center
        _, logdet = np.linalg.slogdet(self.covariance)
        quad = diff @ np.linalg.solve(self.covariance, diff)
        return float(-0.5 * (quad + logdet + self.dim * math.log(2.0 * math.pi)))

    @classmethod
    def from_fisher(cls, center, fisher: np.ndarray, t: int, information: str = "expected") -> "LaplaceApprox":
        fisher = check_conditioning(np.atleast_2d(fisher))
        return cls(center, np.linalg.inv(fisher) / max(t, 1), fisher, t, information)


def _agent_covariates(belief):
    if not belief.atoms.observation_atoms or len(belief.atoms) == 0:
        return None
    return [belief.atoms.covariates[belief.atoms.owners == j] for j in range(belief.network.m)]


def laplace_approx(
    belief,
    estimate: Optional[MEstimate] = None,
    information: str = "expected",
    fisher: Optional[np.ndarray] = None,
) -> LaplaceApprox:
    """Laplace approximation of an exact belief at its M-estimate.

    ``expected`` uses the average Fisher information at theta_hat (empirical
    X^T W X / t per agent for logistic data); ``observed`` uses the Hessian of
    the agent's surrogate loss at theta_hat.
    """
    if estimate is None:
        estimate = estimate_for_belief(belief)
    theta_hat = estimate.theta_hat
    if fisher is None:
        if information == "expected":
            fisher = average_fisher(belief.network.models, theta_hat, _agent_covariates(belief))
        elif information == "observed":
            _, _, fisher = belief.agent_loss(theta_hat)
        else:
            raise RepresentationMismatch(f"unknown information type '{information}'")
    return LaplaceApprox.from_fisher(theta_hat, fisher, belief.step, information)


@dataclass(frozen=True, eq=False)
class CredibleRegion:
    """{theta : (theta - center)^T shape (theta - center) <= radius_sq}"""

    center: np.ndarray
    shape: np.ndarray
    radius_sq: float
    alpha: float
    t: int
    scale: str = "agent"
    divisor: int = 0

    def distance_sq(self, theta) -> float:
        diff = np.atleast_1d(np.asarray(theta, dtype=float)) - self.center
        return float(diff @ self.shape @ diff)

    def contains(self, theta) -> bool:
        return self.distance_sq(theta) <= self.radius_sq

    def laplace_mass(self) -> float:
        """Mass of the region under N(center, shape^-1 / divisor); divisor is t, or m t at network scale"""
        divisor = self.divisor or max(self.t, 1)
        return chi2_cdf(self.radius_sq * divisor, self.center.size)


def credible_region(
    laplace: LaplaceApprox,
    alpha: float,
    t: Optional[int] = None,
    scale: str = "agent",
    m: int = 1,
) -> CredibleRegion:
    """Level 1 - alpha ellipsoid with radius chi2_{alpha,p} / t.

    ``scale="network"`` divides by m t instead, matching the spread of the
    estimator when every agent has effectively seen all m t observations.
    """
    t = laplace.t if t is None else t
    quantile = chi2_quantile(1.0 - alpha, laplace.dim)
    if scale == "agent":
        divisor = max(t, 1)
    elif scale == "network":
        divisor = max(t, 1) * m
    else:
        raise RepresentationMismatch(f"unknown credible region scale '{scale}'")
    return CredibleRegion(laplace.center, laplace.fisher, quantile / divisor, alpha, t, scale, divisor)
