"""Distance between a rescaled belief and its Gaussian limit.

The belief of agent j at step t is mapped to the density q of
scale * (theta - center) and compared with N(0, V^-1) in the unnormalized
l1 convention, so values range over [0, 2].
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import List, Optional

import numpy as np
from scipy import integrate
from scipy.interpolate import RegularGridInterpolator

from app.belief.grid import GridBelief, trapezoid_weights
from app.belief.natural import NaturalBelief
from app.config import Config
from app.estimators.laplace import LaplaceApprox
from app.utils.errors import NonIntegrable

logger = logging.getLogger(__name__)

HALF_WIDTH_SDS = 8.0
POINTS_2D = 201
TAIL_TOL = 1e-6


@dataclass(frozen=True)
class BvmReport:
    t: int
    agent: int
    tv_to_gaussian: float
    center: str = "theta_hat"
    scale: float = 1.0
    tail_mass: float = 0.0
    fisher_chart: str = "theta"
    convention: str = "l1"

    def to_dict(self) -> dict:
        return asdict(self)


def belief_log_density_batch(belief, thetas: np.ndarray) -> np.ndarray:
    """Normalized log density of a natural or grid belief at every row of thetas"""
    thetas = np.asarray(thetas, dtype=float)
    if isinstance(belief, GridBelief):
        normalized = belief.normalize()
        inside = np.all((thetas >= belief.lower) & (thetas <= belief.upper), axis=1)
        out = np.full(len(thetas), -np.inf)
        if np.any(inside):
            with np.errstate(invalid="ignore"):
                values = RegularGridInterpolator(belief.axes(), normalized.logw.reshape(belief.shape))(thetas[inside])
            out[inside] = np.where(np.isfinite(values), values, -np.inf)
        return out
    return belief.log_unnormalized_batch(thetas) - belief.log_normalizer()


def _gaussian_l1_1d(mean_a: float, var_a: float, mean_b: float, var_b: float) -> float:
    """Integral of |N(mean_a, var_a) - N(mean_b, var_b)| by 1-D quadrature"""
    sd_a, sd_b = math.sqrt(var_a), math.sqrt(var_b)
    lo = min(mean_a - 12 * sd_a, mean_b - 12 * sd_b)
    hi = max(mean_a + 12 * sd_a, mean_b + 12 * sd_b)

    def gap(x):
        pa = math.exp(-0.5 * ((x - mean_a) / sd_a) ** 2) / (sd_a * math.sqrt(2 * math.pi))
        pb = math.exp(-0.5 * ((x - mean_b) / sd_b) ** 2) / (sd_b * math.sqrt(2 * math.pi))
        return abs(pa - pb)

    # the densities cross at most twice; splitting there keeps quad smooth
    crossings = _gaussian_crossings(mean_a, var_a, mean_b, var_b)
    edges = [lo] + sorted(c for c in crossings if lo < c < hi) + [hi]
    total = 0.0
    for left, right in zip(edges[:-1], edges[1:]):
        value, _ = integrate.quad(gap, left, right, epsabs=1e-12, epsrel=1e-10, limit=200)
        total += value
    return min(total, 2.0)


def _gaussian_crossings(mean_a, var_a, mean_b, var_b) -> List[float]:
    # log N_a(x) = log N_b(x) is a quadratic in x
    a = 0.5 / var_b - 0.5 / var_a
    b = mean_a / var_a - mean_b / var_b
    c = 0.5 * mean_b ** 2 / var_b - 0.5 * mean_a ** 2 / var_a + 0.5 * math.log(var_b / var_a)
    if abs(a) < 1e-15:
        return [-c / b] if abs(b) > 1e-15 else []
    disc = b * b - 4 * a * c
    if disc < 0:
        return []
    root = math.sqrt(disc)
    return [(-b - root) / (2 * a), (-b + root) / (2 * a)]


def bvm_tv(
    belief,
    laplace: LaplaceApprox,
    center: Optional[np.ndarray] = None,
    scale: Optional[float] = None,
    center_label: str = "theta_hat",
    points: Optional[int] = None,
) -> BvmReport:
    """l1 distance between q (density of scale * (theta - center)) and N(0, V^-1).

    Defaults: center is the Laplace center and scale is sqrt(t). Gaussian
    beliefs are compared in closed form through 1-D quadrature of the two
    densities; all others are rasterized on a lattice spanning 8 standard
    deviations of the limit around zero.
    """
    t = max(belief.step, 1)
    center = laplace.center if center is None else np.atleast_1d(np.asarray(center, dtype=float))
    scale = math.sqrt(t) if scale is None else float(scale)
    limit_cov = np.linalg.inv(laplace.fisher)
    dim = center.size
    chart = "location" if isinstance(belief, NaturalBelief) and belief.network.kind == "gaussian" else "theta"

    if isinstance(belief, NaturalBelief) and belief.is_gaussian and dim == 1:
        mean, cov = belief.gaussian_params()
        value = _gaussian_l1_1d(
            float(scale * (mean[0] - center[0])), float(scale * scale * cov[0, 0]), 0.0, float(limit_cov[0, 0]),
        )
        return BvmReport(belief.step, belief.agent, value, center_label, scale, 0.0, chart)

    if dim > 2:
        raise NonIntegrable(f"lattice comparison supports one or two parameters, got {dim}")
    if points is None:
        points = Config.QUAD_POINTS if dim == 1 else POINTS_2D
    half = HALF_WIDTH_SDS * math.sqrt(float(np.max(np.linalg.eigvalsh(limit_cov))))
    axis = np.linspace(-half, half, points)
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    xs = np.stack([g.reshape(-1) for g in mesh], axis=1)
    weights = trapezoid_weights(-half, half, points)
    if dim == 2:
        weights = np.outer(weights, weights).reshape(-1)

    log_q = belief_log_density_batch(belief, center + xs / scale) - dim * math.log(scale)
    q = np.exp(log_q)
    precision = laplace.fisher
    _, logdet = np.linalg.slogdet(limit_cov)
    quad = np.einsum("gi,ij,gj->g", xs, precision, xs)
    phi = np.exp(-0.5 * (quad + logdet + dim * math.log(2 * math.pi)))

    q_mass = float(weights @ q)
    tail = max(0.0, 1.0 - q_mass)
    if tail > TAIL_TOL:
        logger.debug("bvm lattice misses %.3g of the belief mass at t=%d", tail, belief.step)
    value = min(float(weights @ np.abs(q - phi)) + tail, 2.0)
    return BvmReport(belief.step, belief.agent, value, center_label, scale, tail, chart)


def bvm_tv_misspecified(belief, laplace: LaplaceApprox, theta0) -> List[BvmReport]:
    """TV centered at theta_hat and at theta0, the latter with eps_t = t^-1/2 and 2 t^-1/2"""
    root_t = math.sqrt(max(belief.step, 1))
    return [
        bvm_tv(belief, laplace),
        bvm_tv(belief, laplace, center=theta0, scale=root_t, center_label="theta0"),
        bvm_tv(belief, laplace, center=theta0, scale=0.5 * root_t, center_label="theta0_x2"),
    ]
