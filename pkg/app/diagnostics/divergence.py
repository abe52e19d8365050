"""Divergences between two densities: KL, Renyi, Hellinger, total variation, chi-square.

Gaussian pairs use closed forms. Other pairs integrate on their shared box
(1-D or 2-D adaptive quadrature) or fall back to plain Monte Carlo
over draws from ``p`` when a sampler is attached.
"""

import logging
import math
import warnings
from dataclasses import asdict, dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import integrate
from scipy.special import logsumexp

from app.services.rng import monte_carlo_stream
from app.utils.errors import NonIntegrable, SupportMismatch

logger = logging.getLogger(__name__)

QUAD_TOL = 1e-8
GAUSSIAN_HALF_WIDTH = 12.0
KINDS = ("kl", "renyi", "hellinger", "tv", "chisq")


@dataclass(frozen=True, eq=False)
class GaussianDensity:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.atleast_1d(np.asarray(self.mean, dtype=float)))
        object.__setattr__(self, "cov", np.atleast_2d(np.asarray(self.cov, dtype=float)))

    @property
    def dim(self) -> int:
        return self.mean.size

    def log_pdf(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, self.dim)
        diff = points - self.mean
        _, logdet = np.linalg.slogdet(self.cov)
        quad = np.einsum("gi,ij,gj->g", diff, np.linalg.inv(self.cov), diff)
        return -0.5 * (quad + logdet + self.dim * math.log(2.0 * math.pi))

    def box(self) -> Tuple[np.ndarray, np.ndarray]:
        sd = np.sqrt(np.diag(self.cov))
        return self.mean - GAUSSIAN_HALF_WIDTH * sd, self.mean + GAUSSIAN_HALF_WIDTH * sd

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.multivariate_normal(self.mean, self.cov, size=n)


@dataclass(frozen=True, eq=False)
class BoxDensity:
    """A normalized density known through a vectorized log-pdf on a box"""

    log_pdf: Callable[[np.ndarray], np.ndarray]
    lower: np.ndarray
    upper: np.ndarray
    sampler: Optional[Callable[[np.random.Generator, int], np.ndarray]] = None

    def __post_init__(self):
        object.__setattr__(self, "lower", np.atleast_1d(np.asarray(self.lower, dtype=float)))
        object.__setattr__(self, "upper", np.atleast_1d(np.asarray(self.upper, dtype=float)))

    @property
    def dim(self) -> int:
        return self.lower.size

    def box(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.lower, self.upper

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.sampler is None:
            raise NonIntegrable("Monte Carlo divergence needs a sampler for p")
        return self.sampler(rng, n)


@dataclass(frozen=True)
class DivergenceReport:
    kind: str
    value: float
    method: str
    rho: Optional[float] = None
    stderr: Optional[float] = None
    tol: Optional[float] = None
    convention: Optional[str] = None

    def to_dict(self) -> dict:
        return asdict(self)


# closed forms


def gaussian_renyi(p: GaussianDensity, q: GaussianDensity, rho: float) -> float:
    """D_rho(p || q); infinite when rho q.cov + (1 - rho) p.cov is not positive definite"""
    if abs(rho - 1.0) < 1e-12:
        return gaussian_kl_divergence(p, q)
    mixed = rho * q.cov + (1.0 - rho) * p.cov
    sign, logdet_mixed = np.linalg.slogdet(mixed)
    if sign <= 0 or np.min(np.linalg.eigvalsh(mixed)) <= 0:
        return math.inf
    diff = p.mean - q.mean
    _, logdet_p = np.linalg.slogdet(p.cov)
    _, logdet_q = np.linalg.slogdet(q.cov)
    quad = 0.5 * rho * float(diff @ np.linalg.solve(mixed, diff))
    return quad - (logdet_mixed - (1.0 - rho) * logdet_p - rho * logdet_q) / (2.0 * (rho - 1.0))


def gaussian_kl_divergence(p: GaussianDensity, q: GaussianDensity) -> float:
    q_inv = np.linalg.inv(q.cov)
    diff = q.mean - p.mean
    _, logdet_p = np.linalg.slogdet(p.cov)
    _, logdet_q = np.linalg.slogdet(q.cov)
    return 0.5 * float(np.trace(q_inv @ p.cov) + diff @ q_inv @ diff - p.dim + logdet_q - logdet_p)


def _closed_form(p: GaussianDensity, q: GaussianDensity, kind: str, rho: Optional[float]) -> Optional[float]:
    if kind == "kl":
        return gaussian_kl_divergence(p, q)
    if kind == "renyi":
        return gaussian_renyi(p, q, rho)
    if kind == "hellinger":
        return math.sqrt(max(0.0, -math.expm1(-0.5 * gaussian_renyi(p, q, 0.5))))
    if kind == "chisq":
        return math.expm1(gaussian_renyi(p, q, 2.0))
    # total variation has no closed form for general Gaussian pairs
    return None


# quadrature


def _integrand(kind: str, rho: Optional[float]) -> Callable[[float, float], float]:
    """Pointwise integrand from log p and log q"""

    def kl(lp, lq):
        if lp == -math.inf:
            return 0.0
        if lq == -math.inf:
            raise SupportMismatch("p charges a region where q vanishes")
        return math.exp(lp) * (lp - lq)

    def renyi(lp, lq):
        if lp == -math.inf:
            return 0.0
        if lq == -math.inf:
            if rho > 1.0:
                raise SupportMismatch("p charges a region where q vanishes")
            return 0.0
        return math.exp(rho * lp + (1.0 - rho) * lq)

    def bhattacharyya(lp, lq):
        if lp == -math.inf or lq == -math.inf:
            return 0.0
        return math.exp(0.5 * (lp + lq))

    def tv(lp, lq):
        return 0.5 * abs(math.exp(lp) - math.exp(lq))

    def chisq(lp, lq):
        if lp == -math.inf:
            return 0.0
        if lq == -math.inf:
            raise SupportMismatch("p charges a region where q vanishes")
        return math.exp(2.0 * lp - lq)

    return {"kl": kl, "renyi": renyi, "hellinger": bhattacharyya, "tv": tv, "chisq": chisq}[kind]


def _shared_box(p, q) -> Tuple[np.ndarray, np.ndarray]:
    p_lo, p_hi = p.box()
    q_lo, q_hi = q.box()
    return np.minimum(p_lo, q_lo), np.maximum(p_hi, q_hi)


def _integrate(p, q, kind: str, rho: Optional[float], tol: float) -> float:
    point = _integrand(kind, rho)
    lower, upper = _shared_box(p, q)

    def f(*coords):
        x = np.array(coords[::-1])[None, :] if len(coords) > 1 else np.array([[coords[0]]])
        return point(float(p.log_pdf(x)[0]), float(q.log_pdf(x)[0]))

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            if p.dim == 1:
                value, _ = integrate.quad(f, lower[0], upper[0], epsabs=tol * 1e-3, epsrel=tol, limit=400)
            elif p.dim == 2:
                value, _ = integrate.dblquad(f, lower[0], upper[0], lower[1], upper[1], epsabs=tol * 1e-3, epsrel=tol)
            else:
                raise NonIntegrable(f"quadrature supports one or two dimensions, got {p.dim}")
        except integrate.IntegrationWarning as e:
            raise NonIntegrable(f"{kind} quadrature did not converge: {e}") from e
    return value


def _from_integral(kind: str, integral: float, rho: Optional[float]) -> float:
    if kind in ("kl", "tv"):
        return max(integral, 0.0)
    if kind == "renyi":
        return max(math.log(integral) / (rho - 1.0), 0.0) if integral > 0 else math.inf
    if kind == "hellinger":
        return math.sqrt(min(max(1.0 - integral, 0.0), 1.0))
    return max(integral - 1.0, 0.0)


# Monte Carlo


def _monte_carlo(p, q, kind: str, rho: Optional[float], draws: int, seed: int) -> Tuple[float, float]:
    x = p.sample(monte_carlo_stream(seed, 1), draws)
    log_ratio = p.log_pdf(x) - q.log_pdf(x)
    needs_support = kind in ("kl", "chisq") or (kind == "renyi" and rho > 1.0)
    if needs_support and np.any(np.isposinf(log_ratio)):
        raise SupportMismatch("p charges a region where q vanishes")
    n = len(log_ratio)
    if kind == "kl":
        return max(float(np.mean(log_ratio)), 0.0), float(np.std(log_ratio, ddof=1) / math.sqrt(n))
    if kind == "tv":
        terms = 0.5 * np.abs(1.0 - np.exp(-log_ratio))
        return float(np.mean(terms)), float(np.std(terms, ddof=1) / math.sqrt(n))
    if kind == "hellinger":
        terms = np.exp(-0.5 * log_ratio)
        bc = float(np.mean(terms))
        h = math.sqrt(min(max(1.0 - bc, 0.0), 1.0))
        se = float(np.std(terms, ddof=1) / math.sqrt(n)) / max(2.0 * h, 1e-12)
        return h, se
    power = (rho - 1.0) if kind == "renyi" else 1.0
    log_mean = float(logsumexp(power * log_ratio) - math.log(n))
    terms = np.exp(power * log_ratio - log_mean)
    rel_se = float(np.std(terms, ddof=1) / math.sqrt(n))
    if kind == "renyi":
        return max(log_mean / power, 0.0), rel_se / abs(power)
    return max(math.expm1(log_mean), 0.0), rel_se * math.exp(log_mean)


def divergence(
    p,
    q,
    kind: str,
    rho: Optional[float] = None,
    method: str = "auto",
    tol: float = QUAD_TOL,
    draws: int = 20000,
    seed: int = 0,
) -> DivergenceReport:
    """D(p || q) of the requested kind.

    Renyi orders map onto their named relatives: rho -> 1 is KL, rho = 1/2
    goes through the Hellinger distance as -2 log(1 - H^2) and rho = 2 through
    log(1 + chi^2). Total variation uses the 1/2 convention (at most 1).
    """
    kind = kind.lower()
    if kind not in KINDS:
        raise SupportMismatch(f"unknown divergence kind '{kind}'")
    if kind == "renyi":
        if rho is None or rho <= 0:
            raise SupportMismatch("Renyi divergence needs an order rho > 0")
        if rho == 1.0:
            report = divergence(p, q, "kl", method=method, tol=tol, draws=draws, seed=seed)
            return DivergenceReport("renyi", report.value, report.method, 1.0, report.stderr, report.tol)
        if rho in (0.5, 2.0) and method != "monte_carlo":
            relative = divergence(p, q, "hellinger" if rho == 0.5 else "chisq", method=method, tol=tol)
            if rho == 0.5:
                value = -2.0 * math.log1p(-relative.value ** 2) if relative.value < 1.0 else math.inf
            else:
                value = math.log1p(relative.value)
            return DivergenceReport("renyi", value, relative.method, rho, relative.stderr, relative.tol)
    if p.dim != q.dim:
        raise SupportMismatch(f"densities of dimension {p.dim} and {q.dim}")
    convention = "half_l1" if kind == "tv" else None

    both_gaussian = isinstance(p, GaussianDensity) and isinstance(q, GaussianDensity)
    if method in ("auto", "closed_form") and both_gaussian:
        value = _closed_form(p, q, kind, rho)
        if value is not None:
            return DivergenceReport(kind, max(value, 0.0), "closed_form", rho, convention=convention)
    if method in ("auto", "closed_form", "quadrature") and p.dim <= 2:
        integral = _integrate(p, q, kind, rho, tol)
        return DivergenceReport(kind, _from_integral(kind, integral, rho), "quadrature", rho, tol=tol, convention=convention)
    value, stderr = _monte_carlo(p, q, kind, rho, draws, seed)
    logger.debug("%s divergence by Monte Carlo: %.6g +- %.2g", kind, value, stderr)
    return DivergenceReport(
        kind, value, "monte_carlo", rho, stderr=stderr, convention=convention
    )
