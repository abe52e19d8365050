"""Network-weighted law of large numbers and central limit checks."""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.stats import kstest

from app.graph.schedule import GraphSchedule
from app.services.rng import monte_carlo_stream

logger = logging.getLogger(__name__)


@dataclass
class LlnCltReport:
    m: int
    t: int
    lam: float
    replications: int
    network_mean: List[float]
    lln_max_error: float
    ks_distance: float
    ks_pvalue: float
    agent: int = 0
    z_means: List[List[float]] = field(default_factory=list, repr=False)
    clt_stats: List[float] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("clt_stats")
        return out


def _root(cov: np.ndarray) -> np.ndarray:
    """Symmetric square root; degenerate covariances give constant streams"""
    values, vectors = np.linalg.eigh(cov)
    return vectors @ np.diag(np.sqrt(np.clip(values, 0.0, None))) @ vectors.T


def _draw_streams(rng: np.random.Generator, t: int, means: np.ndarray, covs: np.ndarray) -> np.ndarray:
    """(t, m, d) Gaussian statistics with per-agent means and covariances"""
    m, d = means.shape
    factors = np.stack([_root(c) for c in covs])
    z = rng.standard_normal((t, m, d))
    return means[None, :, :] + np.einsum("mij,tmj->tmi", factors, z)


def network_accumulate(schedules: Sequence[GraphSchedule], streams: np.ndarray) -> np.ndarray:
    """sum_k (A_k ... A_{t-1})^T S_k for every replication.

    ``streams`` is (R, t, m, d); the result is (R, m, d) with agent j's
    entry equal to sum_i sum_k [A_k ... A_{t-1}]_ij S_k^i.
    """
    r, t, m, d = streams.shape
    total = np.zeros((r, m, d))
    base = schedules[0].base.w
    for step in range(1, t + 1):
        active = np.array([s.active(step - 1) for s in schedules])
        mixed = np.einsum("ij,rid->rjd", base, total)
        total = np.where(active[:, None, None], mixed, total) + streams[:, step - 1]
    return total


def distributed_lln_clt_check(
    m: int,
    t: int,
    schedule: GraphSchedule,
    means,
    covs=None,
    replications: int = 1,
    seed: int = 0,
    agent: int = 0,
    sds: Optional[Sequence[float]] = None,
) -> LlnCltReport:
    """Check Z_t^j against the network mean and the standardized sums against N(0, 1).

    ``means`` is (m,) or (m, d). Covariances come from ``covs`` (m, d, d) or
    per-agent standard deviations ``sds``; the default is unit variance.
    """
    means = np.asarray(means, dtype=float)
    if means.ndim == 1:
        means = means[:, None]
    d = means.shape[1]
    if covs is None:
        scales = np.ones(m) if sds is None else np.asarray(sds, dtype=float)
        covs = np.stack([np.eye(d) * s * s for s in scales])
    covs = np.asarray(covs, dtype=float).reshape(m, d, d)

    schedules = [schedule.for_replication(r) for r in range(replications)]
    streams = np.stack([
        _draw_streams(monte_carlo_stream(seed, r), t, means, covs) for r in range(replications)
    ])
    totals = network_accumulate(schedules, streams)
    z_means = totals / t
    network_mean = means.mean(axis=0)
    lln_error = float(np.max(np.abs(z_means - network_mean)))

    # centred sums: subtract the same weights applied to mu^i
    centred = network_accumulate(schedules, streams - means[None, None, :, :])
    avg_cov = covs.mean(axis=0)
    if np.min(np.linalg.eigvalsh(avg_cov)) > 0:
        whiten = np.linalg.inv(_root(avg_cov))
        stats = math.sqrt(m / t) * np.einsum("ij,rj->ri", whiten, centred[:, agent, :])
        flat = stats.reshape(-1)
    else:
        flat = np.zeros(0)
    if flat.size > 1:
        ks = kstest(flat, "norm")
        ks_distance, ks_pvalue = float(ks.statistic), float(ks.pvalue)
    else:
        ks_distance, ks_pvalue = math.nan, math.nan
    logger.debug("lln error %.4g, ks distance %.4g over %d statistics", lln_error, ks_distance, flat.size)
    return LlnCltReport(
        m=m, t=t, lam=schedule.lam, replications=replications,
        network_mean=network_mean.tolist(), lln_max_error=lln_error,
        ks_distance=ks_distance, ks_pvalue=ks_pvalue, agent=agent,
        z_means=z_means[:, agent, :].tolist(), clt_stats=flat.tolist(),
    )


def lln_clt_replication(
    m: int,
    t: int,
    schedule: GraphSchedule,
    means,
    sds: Sequence[float],
    seed: int,
    replication: int,
) -> dict:
    """One scalar replication: every agent's Z_t^j and standardized sum"""
    means = np.asarray(means, dtype=float).reshape(m, 1)
    covs = np.stack([np.eye(1) * s * s for s in np.asarray(sds, dtype=float)])
    streams = _draw_streams(monte_carlo_stream(seed, replication), t, means, covs)[None]
    schedules = [schedule.for_replication(replication)]
    z_means = network_accumulate(schedules, streams)[0, :, 0] / t
    centred = network_accumulate(schedules, streams - means[None, None, :, :])[0, :, 0]
    avg_var = float(covs.mean())
    stats = math.sqrt(m / t) * centred / math.sqrt(avg_var) if avg_var > 0 else np.full(m, math.nan)
    return {"z_mean": z_means, "clt_stat": stats}
