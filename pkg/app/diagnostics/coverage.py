"""Frequentist coverage of credible ellipsoids over seeded replications."""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.belief.trajectory import simulate
from app.estimators.laplace import LaplaceApprox, credible_region, laplace_approx
from app.estimators.newton import estimate_for_belief
from app.graph.schedule import GraphSchedule
from app.statmodels.base import NetworkModel
from app.statmodels.truth import GaussianMisspecifiedTruth

logger = logging.getLogger(__name__)

WILSON_Z = 1.959963984540054
SCALES = ("agent", "network")


def wilson_interval(successes: int, n: int, z: float = WILSON_Z) -> Tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    p = successes / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


@dataclass
class CoverageReport:
    alpha: float
    t: int
    m: int
    replications: int
    coverage: Dict[str, float]
    interval: Dict[str, Tuple[float, float]]
    misspecified: bool = False
    outcomes: List[dict] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("outcomes")
        out["interval"] = {k: list(v) for k, v in self.interval.items()}
        return out


def region_outcome(belief, theta0, alpha: float, m: int, laplace: Optional[LaplaceApprox] = None) -> dict:
    """Whether theta0 lies in the agent- and network-scaled regions of one belief"""
    if laplace is None:
        laplace = laplace_approx(belief, estimate_for_belief(belief))
    outcome = {}
    for scale in SCALES:
        region = credible_region(laplace, alpha, scale=scale, m=m)
        outcome[f"covered_{scale}"] = region.contains(theta0)
        outcome[f"radius_{scale}"] = region.radius_sq
        outcome["distance_sq"] = region.distance_sq(theta0)
    return outcome


def summarize_outcomes(outcomes: Sequence[dict], alpha: float, t: int, m: int, misspecified: bool) -> CoverageReport:
    n = len(outcomes)
    coverage, interval = {}, {}
    for scale in SCALES:
        hits = sum(bool(o[f"covered_{scale}"]) for o in outcomes)
        coverage[scale] = hits / n if n else math.nan
        interval[scale] = wilson_interval(hits, n)
    if misspecified:
        logger.info("coverage under misspecification: %s (nominal %.3f)", coverage, 1 - alpha)
    return CoverageReport(alpha, t, m, n, coverage, interval, misspecified, list(outcomes))


def coverage_experiment(
    replications: int,
    network: NetworkModel,
    prior,
    schedule: GraphSchedule,
    truth,
    t: int,
    alpha: float,
    seed: int = 0,
    agent: int = 0,
) -> CoverageReport:
    """Fraction of replications whose level 1 - alpha region at step t contains the truth.

    Both the agent-scaled (chi2 / t) and the network-scaled (chi2 / (m t))
    regions are scored. A misspecified truth is reported, never rejected.
    """
    theta0 = truth.target()
    outcomes = []
    for replication in range(replications):
        for _, state, _ in simulate(network, prior, schedule.for_replication(replication), truth, seed, replication, [t]):
            outcome = region_outcome(state.belief(agent), theta0, alpha, network.m)
            outcome["replication"] = replication
            outcomes.append(outcome)
    return summarize_outcomes(outcomes, alpha, t, network.m, isinstance(truth, GaussianMisspecifiedTruth))
