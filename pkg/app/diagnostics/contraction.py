"""Expected posterior loss, the graph approximation error gamma^2 and their bounds."""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Dict, Optional, Sequence

import numpy as np
from scipy.stats import norm

from app.belief.grid import GridBelief
from app.belief.natural import NaturalBelief
from app.belief.trajectory import simulate
from app.diagnostics.divergence import BoxDensity, divergence
from app.graph.schedule import GraphSchedule, regime_label
from app.statmodels.base import NetworkModel
from app.statmodels.gaussian import GaussianLocationModel, gaussian_kl
from app.statmodels.truth import GaussianMisspecifiedTruth, min_kl, truth_entropy
from app.utils.errors import GraphError, UnsupportedModel

logger = logging.getLogger(__name__)

METRICS = ("sq", "abs", "kl_risk")
LATTICE = 201


@dataclass(frozen=True)
class ContractionReport:
    m: int
    t: int
    lam: float
    nu: float
    metric: str
    expected_loss: float
    gamma_sq: float
    gamma_sq_stderr: float
    baseline: float
    bound: float
    agent: int = 0
    replications: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


# bounds


def approximation_constant(truth, models) -> float:
    """|E0 log p0| + max_i inf_theta KL(P0 || P^i_theta)"""
    return abs(truth_entropy(truth, models)) + max(min_kl(truth, model) for model in models)


def gamma_sq_bound(m: int, nu: float, t: int, constant: float) -> float:
    """(16 m ln m) / (nu t) times the approximation constant; zero for one agent"""
    if m == 1:
        return 0.0
    return 16.0 * m * math.log(m) / (nu * t) * constant


def gamma_sq_time_varying_bound(m: int, lam: float, nu: float, t: int, constant: float) -> float:
    """Bound on gamma^2 under the Bernoulli switch, by communication regime"""
    if m < 2:
        raise GraphError("switching regimes need at least two agents")
    label = regime_label(m, lam)
    if label == "none":
        return math.inf
    if label == "infrequent":
        return 4.0 * m * m / (nu * t) * constant
    return (16.0 * m * math.log(m) + 8.0 * m * math.log(lam)) / (lam * nu * t) * constant


def approximation_bound(m: int, nu: float, t: int, constant: float, lam: Optional[float] = None) -> float:
    """Static bound, or the switching bound when a communication probability below 1 is given"""
    if lam is None or lam >= 1.0 or m == 1:
        return gamma_sq_bound(m, nu, t, constant)
    return gamma_sq_time_varying_bound(m, lam, nu, t, constant)


def contraction_bound(m: int, nu: float, t: int, constant: float, baseline: float, lam: Optional[float] = None) -> float:
    """1/t + gamma^2 bound + baseline KL"""
    return 1.0 / t + approximation_bound(m, nu, t, constant, lam) + baseline


def baseline_kl(truth, models) -> float:
    """(1/m) sum_j KL(P0 || P^j_theta*), zero under correct specification"""
    return float(np.mean([min_kl(truth, model) for model in models]))


# posterior risk


def _gaussian_kl_risk(mean: float, var: float, truth, models) -> float:
    # E_theta KL(P0 || N(theta, s^2)) replaces (mean0 - theta)^2 by (mean0 - mean)^2 + var
    if isinstance(truth, GaussianMisspecifiedTruth):
        mean0, vars0 = truth.mean0, [truth.sigma0 ** 2] * len(models)
    else:
        mean0, vars0 = float(truth.theta0[0]), [model.var for model in models]
    values = [
        gaussian_kl(mean0, v0, mean, model.var) + 0.5 * var / model.var
        for v0, model in zip(vars0, models)
    ]
    return float(np.mean(values))


def posterior_risk(belief, theta0, metric: str = "sq", truth=None, models: Optional[Sequence] = None) -> float:
    """E_{P_t^j} d(theta, theta0) for d in {squared, Euclidean, average KL}"""
    if metric not in METRICS:
        raise UnsupportedModel(f"unknown contraction metric '{metric}'")
    theta0 = np.atleast_1d(np.asarray(theta0, dtype=float))
    if isinstance(belief, NaturalBelief) and belief.is_gaussian:
        mean, cov = belief.gaussian_params()
        delta, var = float(mean[0] - theta0[0]), float(cov[0, 0])
        if metric == "sq":
            return delta * delta + var
        if metric == "abs":
            sd = math.sqrt(var)
            # folded normal mean
            return sd * math.sqrt(2.0 / math.pi) * math.exp(-0.5 * (delta / sd) ** 2) + delta * (1.0 - 2.0 * norm.cdf(-delta / sd))
        return _gaussian_kl_risk(float(mean[0]), var, truth, models)

    grid = belief if isinstance(belief, GridBelief) else GridBelief.rasterize_natural(belief, n=LATTICE, refine=False)
    nodes, masses = grid.nodes(), grid.masses()
    if metric == "sq":
        losses = np.sum((nodes - theta0) ** 2, axis=1)
    elif metric == "abs":
        losses = np.linalg.norm(nodes - theta0, axis=1)
    else:
        if not all(isinstance(model, GaussianLocationModel) for model in models):
            raise UnsupportedModel("the KL risk is available for Gaussian agents only")
        losses = np.array([_gaussian_kl_risk(float(node[0]), 0.0, truth, models) for node in nodes])
    return float(masses @ losses / np.sum(masses))


# gamma^2


def kl_to_ideal(belief: NaturalBelief, ideal: NaturalBelief) -> float:
    """KL(P_t^j || P_t); closed form for Gaussian beliefs, 1-D quadrature otherwise"""
    if belief.is_gaussian and ideal.is_gaussian:
        mean_j, cov_j = belief.gaussian_params()
        mean, cov = ideal.gaussian_params()
        return gaussian_kl(float(mean_j[0]), float(cov_j[0, 0]), float(mean[0]), float(cov[0, 0]))
    if belief.dim_theta != 1:
        raise UnsupportedModel("KL between beliefs needs a closed form or a single parameter")
    _, lo_j, hi_j = belief.laplace_window()
    _, lo, hi = ideal.laplace_window()
    p = BoxDensity(lambda x: belief.log_unnormalized_batch(x) - belief.log_normalizer(), np.minimum(lo_j, lo), np.maximum(hi_j, hi))
    q = BoxDensity(lambda x: ideal.log_unnormalized_batch(x) - ideal.log_normalizer(), p.lower, p.upper)
    return divergence(p, q, "kl", method="quadrature").value


def gamma_sq(
    replications: int,
    network: NetworkModel,
    prior,
    schedule: GraphSchedule,
    truth,
    t: int,
    seed: int = 0,
    agent: int = 0,
    metric: str = "sq",
) -> ContractionReport:
    """Monte-Carlo gamma^2 = E0 KL(P_t^j || P_t) / (m t) and the expected posterior loss"""
    m = network.m
    kls, losses = [], []
    for replication in range(replications):
        run = simulate(
            network, prior, schedule.for_replication(replication), truth,
            seed, replication, [t], track_ideal=True,
        )
        for _, state, ideal in run:
            belief = state.belief(agent)
            kls.append(kl_to_ideal(belief, ideal))
            losses.append(posterior_risk(belief, truth.target(), metric, truth, network.models))
    values = np.array(kls) / (m * t)
    stderr = float(values.std(ddof=1) / math.sqrt(len(values))) if len(values) > 1 else 0.0
    nu = schedule.base.nu
    baseline = baseline_kl(truth, network.models)
    lam = schedule.lam if schedule.mode == "bernoulli" else None
    try:
        bound = approximation_bound(m, nu, t, approximation_constant(truth, network.models), lam)
    except UnsupportedModel:
        bound = math.nan
    return ContractionReport(
        m=m, t=t, lam=schedule.lam, nu=nu, metric=metric,
        expected_loss=float(np.mean(losses)),
        gamma_sq=float(values.mean()), gamma_sq_stderr=stderr,
        baseline=baseline,
        bound=bound,
        agent=agent, replications=replications,
    )


# fits


def fit_slope(ts: Sequence[float], losses: Sequence[float]) -> float:
    """Least-squares slope of log loss against log t"""
    return float(np.polyfit(np.log(np.asarray(ts, dtype=float)), np.log(np.asarray(losses, dtype=float)), 1)[0])


def fit_asymptote(ts: Sequence[float], losses: Sequence[float]) -> Dict[str, float]:
    """Fit loss = a + b / t and return both coefficients"""
    ts = np.asarray(ts, dtype=float)
    design = np.column_stack([np.ones_like(ts), 1.0 / ts])
    (a, b), *_ = np.linalg.lstsq(design, np.asarray(losses, dtype=float), rcond=None)
    return {"asymptote": float(a), "rate_coefficient": float(b)}


def fit_constant(losses: Sequence[float], scales: Sequence[float]) -> Dict[str, float]:
    """C = median(loss / (1/t + gamma^2 + baseline)) and the worst relative spread around it"""
    ratios = np.asarray(losses, dtype=float) / np.asarray(scales, dtype=float)
    c = float(np.median(ratios))
    return {"constant": c, "max_relative_spread": float(np.max(np.abs(ratios / c - 1.0)))}
