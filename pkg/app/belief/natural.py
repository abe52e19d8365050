"""Exact exponential-family beliefs.

Agent j's belief after t steps is

    log p_t^j(theta) = <eta(theta), chi> - sum_a w[a] psi_a(theta) + log pi(theta) + const

where ``chi`` aggregates graph-weighted sufficient statistics and every entry
of ``w`` weighs one log-partition atom. Atoms are agents for models whose
log-partition does not depend on the observation (Gaussian, detection) and
observations for logistic regression, whose atoms carry covariates.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy import integrate

from app.belief.priors import GaussianPrior, UniformPrior
from app.statmodels.base import NetworkModel
from app.utils.errors import NormalizerDivergence, OutOfBox

logger = logging.getLogger(__name__)

QUAD_RTOL = 1e-8
WINDOW_SDS = 10.0


@dataclass(frozen=True, eq=False)
class AtomTable:
    """Owner agent and optional covariate of every log-partition atom"""

    owners: np.ndarray
    covariates: Optional[np.ndarray] = None

    @classmethod
    def per_agent(cls, m: int) -> "AtomTable":
        return cls(owners=np.arange(m))

    @classmethod
    def empty(cls, dim: int) -> "AtomTable":
        return cls(owners=np.zeros(0, dtype=int), covariates=np.zeros((0, dim)))

    @property
    def observation_atoms(self) -> bool:
        return self.covariates is not None

    def __len__(self) -> int:
        return len(self.owners)

    def extend(self, owners: np.ndarray, covariates: np.ndarray) -> "AtomTable":
        return AtomTable(
            owners=np.concatenate([self.owners, owners]),
            covariates=np.vstack([self.covariates, covariates]),
        )


def weighted_log_partition(
    network: NetworkModel, atoms: AtomTable, w: np.ndarray, theta: np.ndarray
) -> Tuple[float, np.ndarray, np.ndarray]:
    """B(theta) = sum_a w[a] psi_a(theta) with gradient and Hessian"""
    p = network.dim_theta
    value, grad, hess = 0.0, np.zeros(p), np.zeros((p, p))
    for j, model in enumerate(network.models):
        mask = atoms.owners == j
        if not np.any(mask):
            continue
        covariates = atoms.covariates[mask] if atoms.observation_atoms else None
        v, g, h = model.weighted_psi(theta, w[mask], covariates)
        value += v
        grad = grad + g
        hess = hess + h
    return value, grad, hess


@dataclass(frozen=True, eq=False)
class NaturalBelief:
    """One agent's exact belief in natural form"""

    network: NetworkModel
    atoms: AtomTable
    chi: np.ndarray
    w: np.ndarray
    prior: object
    step: int = 0
    agent: int = 0
    learning_rate: float = 1.0
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def dim_theta(self) -> int:
        return self.network.dim_theta

    @property
    def total_weight(self) -> float:
        return float(np.sum(self.w))

    @property
    def is_gaussian(self) -> bool:
        return self.network.kind == "gaussian" and isinstance(self.prior, GaussianPrior)

    def _theta(self, theta) -> np.ndarray:
        return np.atleast_1d(np.asarray(theta, dtype=float))

    def log_partition(self, theta) -> Tuple[float, np.ndarray, np.ndarray]:
        return weighted_log_partition(self.network, self.atoms, self.w, self._theta(theta))

    def data_term(self, theta) -> Tuple[float, np.ndarray, np.ndarray]:
        """<eta, chi> - B and its derivatives, without the prior"""
        theta = self._theta(theta)
        b, b_grad, b_hess = self.log_partition(theta)
        eta = self.network.natural(theta)
        jac = self.network.natural_jacobian(theta)
        curvature = np.tensordot(self.chi, self.network.natural_hessians(theta), axes=1)
        return float(eta @ self.chi - b), jac.T @ self.chi - b_grad, curvature - b_hess

    def log_unnormalized(self, theta) -> float:
        theta = self._theta(theta)
        prior_value = self.prior.log_density(theta)
        if not math.isfinite(prior_value):
            return -math.inf
        return self.data_term(theta)[0] + prior_value

    def data_term_batch(self, thetas) -> np.ndarray:
        """<eta, chi> - B at every row of a (G, p) parameter array"""
        thetas = np.asarray(thetas, dtype=float).reshape(-1, self.dim_theta)
        values = self.network.batch_natural(thetas) @ self.chi
        for j, model in enumerate(self.network.models):
            mask = self.atoms.owners == j
            if np.any(mask):
                covariates = self.atoms.covariates[mask] if self.atoms.observation_atoms else None
                values = values - model.batch_psi(thetas, self.w[mask], covariates)
        return values

    def log_unnormalized_batch(self, thetas) -> np.ndarray:
        thetas = np.asarray(thetas, dtype=float).reshape(-1, self.dim_theta)
        return self.data_term_batch(thetas) + self.prior.log_density_batch(thetas)

    def neg_log_posterior(self, theta) -> Tuple[float, np.ndarray, np.ndarray]:
        """Negative unnormalized log density with gradient and Hessian"""
        theta = self._theta(theta)
        value, grad, hess = self.data_term(theta)
        p_value, p_grad, p_hess = self.prior.log_density_derivatives(theta)
        return -(value + p_value), -(grad + p_grad), -(hess + p_hess)

    def agent_loss(self, theta) -> Tuple[float, np.ndarray, np.ndarray]:
        """Surrogate loss f_t^j = -(<eta, chi> - B) / t, the M-estimation objective"""
        scale = max(self.step, 1)
        value, grad, hess = self.data_term(theta)
        return -value / scale, -grad / scale, -hess / scale

    def agent_loss_batch(self, thetas) -> np.ndarray:
        """agent_loss values at every row of a (G, p) parameter array"""
        return -self.data_term_batch(thetas) / max(self.step, 1)

    # Gaussian closed form

    def gaussian_params(self) -> Tuple[np.ndarray, np.ndarray]:
        """Posterior mean and covariance for Gaussian agents with a Gaussian prior"""
        precision = self.prior.precision.copy()
        for j, model in enumerate(self.network.models):
            precision += float(np.sum(self.w[self.atoms.owners == j])) / model.var
        cov = np.linalg.inv(precision)
        return cov @ (self.chi + self.prior.u), cov

    # normalization

    def support_box(self) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        if isinstance(self.prior, UniformPrior):
            return self.prior.lower, self.prior.upper
        if self.network.kind == "detection":
            return np.zeros(2), np.ones(2)
        return None

    def laplace_window(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Posterior mode and an integration window of +-10 sd clipped to the support"""
        from app.estimators.newton import newton_minimize

        box = self.support_box()
        start = self.prior.mode() if box is None else 0.5 * (box[0] + box[1])
        result = newton_minimize(self.neg_log_posterior, start, box=box)
        _, _, hess = self.neg_log_posterior(result.theta_hat)
        try:
            sd = np.sqrt(np.diag(np.linalg.inv(hess)))
        except np.linalg.LinAlgError:
            sd = np.full(self.dim_theta, np.inf)
        sd = np.where(np.isfinite(sd) & (sd > 0), sd, 1.0)
        lo, hi = result.theta_hat - WINDOW_SDS * sd, result.theta_hat + WINDOW_SDS * sd
        if box is not None:
            lo, hi = np.maximum(lo, box[0]), np.minimum(hi, box[1])
        return result.theta_hat, lo, hi

    def log_normalizer(self) -> float:
        if "log_normalizer" in self._cache:
            return self._cache["log_normalizer"]
        if self.is_gaussian:
            mean, cov = self.gaussian_params()
            # normalized log density at the mean minus the unnormalized value
            _, logdet = np.linalg.slogdet(cov)
            peak = -0.5 * (logdet + self.dim_theta * math.log(2 * math.pi))
            value = self.log_unnormalized(mean) - peak
        else:
            value = self._quadrature_normalizer()
        if not math.isfinite(value):
            raise NormalizerDivergence(
                f"agent {self.agent} at step {self.step}: belief normalizer is not finite",
                {"agent": self.agent, "step": self.step},
            )
        self._cache["log_normalizer"] = value
        return value

    def _quadrature_normalizer(self) -> float:
        mode, lo, hi = self.laplace_window()
        peak = self.log_unnormalized(mode)
        if not math.isfinite(peak):
            return math.nan
        if self.dim_theta == 1:
            mass, _ = integrate.quad(
                lambda s: math.exp(self.log_unnormalized(s) - peak),
                lo[0], hi[0], epsabs=0.0, epsrel=QUAD_RTOL, limit=200,
            )
        elif self.dim_theta == 2:
            mass, _ = integrate.dblquad(
                lambda y, x: math.exp(self.log_unnormalized([x, y]) - peak),
                lo[0], hi[0], lo[1], hi[1], epsabs=0.0, epsrel=QUAD_RTOL,
            )
        else:
            return math.nan
        return peak + math.log(mass) if mass > 0 else math.nan

    def density_at(self, theta) -> float:
        """Normalized log density"""
        theta = self._theta(theta)
        box = self.support_box()
        if box is not None and (np.any(theta < box[0]) or np.any(theta > box[1])):
            raise OutOfBox(f"theta={theta.tolist()} outside the belief support")
        return self.log_unnormalized(theta) - self.log_normalizer()

    def posterior_mean(self) -> np.ndarray:
        if self.is_gaussian:
            return self.gaussian_params()[0]
        if "mean" not in self._cache:
            from app.belief.grid import GridBelief

            self._cache["mean"] = GridBelief.rasterize_natural(self).mean()
        return self._cache["mean"]
