"""Log-density lattices over a bounded parameter box (p <= 2).

Nodes include the box boundary and masses use the trapezoid rule, so a
uniform density of value 1/volume has mass exactly one.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.special import logsumexp

from app.utils.errors import NormalizerDivergence, OutOfBox, RepresentationMismatch

logger = logging.getLogger(__name__)

DEFAULT_RESOLUTION = 200
REFINE_TOL = 1e-6
MAX_NODES = {1: 6401, 2: 801}


def trapezoid_weights(lower: float, upper: float, n: int) -> np.ndarray:
    h = (upper - lower) / (n - 1)
    weights = np.full(n, h)
    weights[0] = weights[-1] = 0.5 * h
    return weights


@dataclass(frozen=True, eq=False)
class GridBelief:
    """Node values of log density on a tensor lattice, stored flat in C order"""

    lower: np.ndarray
    upper: np.ndarray
    n: int
    logw: np.ndarray
    step: int = 0
    agent: int = 0
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.size > 2:
            raise RepresentationMismatch("grid beliefs support at most two parameters")
        if self.n < 2:
            raise RepresentationMismatch("a grid needs at least two nodes per dimension")
        logw = np.asarray(self.logw, dtype=float).reshape(-1)
        if logw.size != self.n ** lower.size:
            raise RepresentationMismatch(f"expected {self.n ** lower.size} node values, got {logw.size}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "logw", logw)

    # lattice geometry

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    def axes(self):
        return [np.linspace(lo, hi, self.n) for lo, hi in zip(self.lower, self.upper)]

    def nodes(self) -> np.ndarray:
        if "nodes" not in self._cache:
            mesh = np.meshgrid(*self.axes(), indexing="ij")
            self._cache["nodes"] = np.stack([g.reshape(-1) for g in mesh], axis=1)
        return self._cache["nodes"]

    def log_weights(self) -> np.ndarray:
        if "log_weights" not in self._cache:
            per_axis = [trapezoid_weights(lo, hi, self.n) for lo, hi in zip(self.lower, self.upper)]
            weights = per_axis[0] if self.dim == 1 else np.outer(per_axis[0], per_axis[1]).reshape(-1)
            self._cache["log_weights"] = np.log(weights)
        return self._cache["log_weights"]

    def spacing(self) -> np.ndarray:
        return (self.upper - self.lower) / (self.n - 1)

    # construction

    @classmethod
    def uniform(cls, lower, upper, n: int = DEFAULT_RESOLUTION) -> "GridBelief":
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        volume = float(np.prod(upper - lower))
        return cls(lower, upper, n, np.full(n ** lower.size, -math.log(volume)))

    @classmethod
    def from_log_density(cls, fn: Callable[[np.ndarray], np.ndarray], lower, upper, n: int) -> "GridBelief":
        """Evaluate a vectorized log density on the lattice and normalize"""
        empty = cls(lower, upper, n, np.zeros(n ** np.atleast_1d(lower).size))
        return cls(empty.lower, empty.upper, n, fn(empty.nodes())).normalize()

    @classmethod
    def rasterize(
        cls,
        fn: Callable[[np.ndarray], np.ndarray],
        lower,
        upper,
        n: int = DEFAULT_RESOLUTION,
        refine: bool = True,
    ) -> "GridBelief":
        """Rasterize, doubling the resolution until the normalizer settles"""
        grid = cls(lower, upper, n, np.zeros(n ** np.atleast_1d(lower).size))
        raw = cls(grid.lower, grid.upper, n, fn(grid.nodes()))
        log_mass = raw.log_mass()
        if refine:
            limit = MAX_NODES[grid.dim]
            while 2 * raw.n - 1 <= limit:
                finer_n = 2 * raw.n - 1
                finer = cls(grid.lower, grid.upper, finer_n, np.zeros(finer_n ** grid.dim))
                finer = cls(grid.lower, grid.upper, finer_n, fn(finer.nodes()))
                finer_mass = finer.log_mass()
                settled = abs(math.expm1(finer_mass - log_mass)) < REFINE_TOL
                raw, log_mass = finer, finer_mass
                if settled:
                    break
            else:
                logger.debug("grid refinement stopped at %d nodes per dimension", raw.n)
        return raw.normalize()

    @classmethod
    def rasterize_natural(cls, belief, n: int = DEFAULT_RESOLUTION, refine: bool = True) -> "GridBelief":
        """Lattice view of an exact belief over its Laplace window"""
        _, lo, hi = belief.laplace_window()
        grid = cls.rasterize(belief.log_unnormalized_batch, lo, hi, n, refine=refine)
        return cls(grid.lower, grid.upper, grid.n, grid.logw, step=belief.step, agent=belief.agent)

    # normalization and queries

    def log_mass(self) -> float:
        finite = np.isfinite(self.logw)
        if not np.any(finite):
            return -math.inf
        return float(logsumexp(self.logw[finite] + self.log_weights()[finite]))

    def normalize(self) -> "GridBelief":
        log_mass = self.log_mass()
        if not math.isfinite(log_mass):
            raise NormalizerDivergence(
                f"grid belief of agent {self.agent} at step {self.step} has no finite mass"
            )
        return GridBelief(self.lower, self.upper, self.n, self.logw - log_mass, self.step, self.agent)

    def with_values(self, logw: np.ndarray, step: Optional[int] = None, agent: Optional[int] = None) -> "GridBelief":
        grid = GridBelief(
            self.lower, self.upper, self.n, logw,
            self.step if step is None else step,
            self.agent if agent is None else agent,
        )
        grid._cache.update({k: v for k, v in self._cache.items() if k in ("nodes", "log_weights")})
        return grid

    def contains(self, theta) -> bool:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        return bool(np.all(theta >= self.lower) and np.all(theta <= self.upper))

    def density_at(self, theta) -> float:
        """Normalized log density, linearly interpolated between nodes"""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.size != self.dim or not self.contains(theta):
            raise OutOfBox(f"theta={theta.tolist()} outside [{self.lower.tolist()}, {self.upper.tolist()}]")
        normalized = self.normalize()
        with np.errstate(invalid="ignore"):
            value = RegularGridInterpolator(self.axes(), normalized.logw.reshape(self.shape))(theta[None, :])[0]
        return float(value) if np.isfinite(value) else -math.inf

    def masses(self) -> np.ndarray:
        """Probability carried by every node under the trapezoid rule"""
        normalized = self.normalize()
        return np.exp(normalized.logw + self.log_weights())

    def mass_where(self, mask: np.ndarray) -> float:
        return float(np.sum(self.masses()[np.asarray(mask, dtype=bool)]))

    def mean(self) -> np.ndarray:
        return self.masses() @ self.nodes()

    def covariance(self) -> np.ndarray:
        weights = self.masses()
        centered = self.nodes() - weights @ self.nodes()
        return (centered * weights[:, None]).T @ centered

    def argmax_index(self) -> int:
        """Lowest linear index among the maximizing nodes"""
        return int(np.argmax(self.logw))
