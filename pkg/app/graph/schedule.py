"""Static and Bernoulli-switching consensus schedules.

Step ``tau`` uses matrix ``A_tau`` to mix the beliefs held after ``tau``
observations; ``A_0`` mixes the priors. Under the Bernoulli switch the base
matrix is used with probability ``lam`` and the identity otherwise,
independently per step.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Optional

import numpy as np

from app.graph.topology import AdjacencyMatrix, identity_matrix
from app.services.rng import Purpose, stream
from app.utils.errors import GraphError, IndexOrder

logger = logging.getLogger(__name__)

SWITCH_BLOCK = 1024
RENORMALIZE_EVERY = 64


@lru_cache(maxsize=4096)
def _switch_uniforms(seed: int, block: int) -> np.ndarray:
    draws = stream(seed, block, Purpose.SCHEDULE).random(SWITCH_BLOCK)
    draws.setflags(write=False)
    return draws


@dataclass(frozen=True)
class GraphSchedule:
    """Sequence of consensus matrices A_0, A_1, ..."""

    base: AdjacencyMatrix
    mode: str = "static"
    lam: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("static", "bernoulli"):
            raise GraphError(f"unknown schedule mode '{self.mode}'")
        if not 0.0 <= self.lam <= 1.0:
            raise GraphError(f"switch probability must lie in [0, 1], got {self.lam}")

    @property
    def m(self) -> int:
        return self.base.m

    @classmethod
    def static(cls, base: AdjacencyMatrix) -> "GraphSchedule":
        return cls(base=base)

    @classmethod
    def bernoulli(cls, base: AdjacencyMatrix, lam: float, seed: int) -> "GraphSchedule":
        return cls(base=base, mode="bernoulli", lam=lam, seed=seed)

    def for_replication(self, replication: int) -> "GraphSchedule":
        """Independent switch sequence for one replication; static schedules are shared"""
        if self.mode == "static":
            return self
        seed = int(np.random.SeedSequence([self.seed, replication, Purpose.SCHEDULE]).generate_state(1)[0])
        return GraphSchedule(self.base, self.mode, self.lam, seed)

    def active(self, tau: int) -> bool:
        """Whether step tau communicates through the base matrix"""
        if tau < 0:
            raise IndexOrder(f"step index must be nonnegative, got {tau}")
        if self.mode == "static" or self.lam >= 1.0:
            return True
        if self.lam <= 0.0:
            return False
        block, offset = divmod(tau, SWITCH_BLOCK)
        return bool(_switch_uniforms(self.seed, block)[offset] < self.lam)

    def matrix_at(self, tau: int) -> AdjacencyMatrix:
        return self.base if self.active(tau) else identity_matrix(self.m)

    def weights_at(self, tau: int) -> np.ndarray:
        return self.base.w if self.active(tau) else np.eye(self.m)


def _renormalize_rows(product: np.ndarray) -> np.ndarray:
    return product / product.sum(axis=1, keepdims=True)


def matrix_power_product(schedule: GraphSchedule, k: int, t: int) -> np.ndarray:
    """Return A_k A_{k+1} ... A_{t-1}, the identity when k == t."""
    if k > t:
        raise IndexOrder(f"product start k={k} exceeds end t={t}")
    if k < 0:
        raise IndexOrder(f"product start must be nonnegative, got {k}")
    product = np.eye(schedule.m)
    for count, tau in enumerate(range(t - 1, k - 1, -1), start=1):
        if schedule.active(tau):
            product = schedule.base.w @ product
        if count % RENORMALIZE_EVERY == 0:
            product = _renormalize_rows(product)
    return product


def consensus_deviations(schedule: GraphSchedule, t: int) -> np.ndarray:
    """Per-agent sum over k=1..t of the l1 distance of row i of A_k...A_{t-1} to 1/m.

    All agents are computed together by accumulating the product one left
    factor at a time, so the cost is O(t m^3) for the whole network.
    """
    if t < 1:
        raise IndexOrder(f"horizon must be at least 1, got {t}")
    m = schedule.m
    product = np.eye(m)
    total = np.abs(product - 1.0 / m).sum(axis=1)
    for count, k in enumerate(range(t - 1, 0, -1), start=1):
        if schedule.active(k):
            product = schedule.base.w @ product
        if count % RENORMALIZE_EVERY == 0:
            product = _renormalize_rows(product)
        total += np.abs(product - 1.0 / m).sum(axis=1)
    return total


def consensus_deviation(schedule: GraphSchedule, i: int, t: int) -> float:
    """Consensus deviation of agent i (zero-based) over horizon t"""
    if not 0 <= i < schedule.m:
        raise IndexOrder(f"agent index {i} outside 0..{schedule.m - 1}")
    return float(consensus_deviations(schedule, t)[i])


def mean_consensus_deviation(
    base: AdjacencyMatrix, lam: float, t: int, seeds: Iterable[int]
) -> np.ndarray:
    """Per-agent deviation averaged over independent Bernoulli schedules"""
    runs = [consensus_deviations(GraphSchedule.bernoulli(base, lam, seed), t) for seed in seeds]
    return np.mean(runs, axis=0)


def regime_label(m: int, lam: float) -> str:
    if lam <= 0.0:
        return "none"
    return "frequent" if lam >= 2.0 / m else "infrequent"


def regime_bound(m: int, lam: float, nu: float) -> float:
    """Deviation bound for the Bernoulli switch in its three regimes.

    lam >= 2/m uses (16 m^2 ln m + 8 m^2 ln lam) / (lam nu), smaller positive lam
    uses 4 m^3 / nu, and lam = 0 has no finite bound.
    """
    if m < 2:
        raise GraphError("switching regimes need at least two agents")
    if nu <= 0:
        raise GraphError(f"nu must be positive, got {nu}")
    label = regime_label(m, lam)
    if label == "none":
        return math.inf
    if label == "infrequent":
        return 4.0 * m ** 3 / nu
    return (16.0 * m * m * math.log(m) + 8.0 * m * m * math.log(lam)) / (lam * nu)


def bound_dominated(m: int, lam: float, nu: float) -> bool:
    """True when the frequent-regime formula exceeds the 4 m^3 / nu branch"""
    if regime_label(m, lam) != "frequent":
        return False
    return regime_bound(m, lam, nu) > 4.0 * m ** 3 / nu


def schedule_summary(schedule: GraphSchedule, horizon: Optional[int] = None) -> dict:
    summary = {
        "m": schedule.m,
        "mode": schedule.mode,
        "lam": schedule.lam,
        "nu": schedule.base.nu,
        "delta": schedule.base.delta,
    }
    if horizon:
        summary["active_fraction"] = float(np.mean([schedule.active(tau) for tau in range(horizon)]))
    return summary
