"""Experiment orchestration: builders, the replication worker pool and the six experiments.

Every experiment splits its work into replication units keyed by sweep
coordinates. Units run on a thread pool, each writing its own spill file, and
the final CSVs are merged in sorted key order, so the worker count never
changes the output.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import kstest

from app.belief.grid import GridBelief
from app.belief.priors import GaussianPrior, UniformPrior
from app.belief.trajectory import simulate
from app.config import Config
from app.diagnostics.bvm import bvm_tv, bvm_tv_misspecified
from app.diagnostics.consistency import consistency_mass
from app.diagnostics.contraction import (
    approximation_bound,
    approximation_constant,
    baseline_kl,
    contraction_bound,
    fit_asymptote,
    fit_constant,
    fit_slope,
    gamma_sq_time_varying_bound,
    kl_to_ideal,
    posterior_risk,
)
from app.diagnostics.coverage import region_outcome, summarize_outcomes
from app.diagnostics.lln_clt import lln_clt_replication
from app.estimators.fisher import average_fisher
from app.estimators.laplace import LaplaceApprox, laplace_approx
from app.estimators.newton import MEstimate, estimate_for_belief
from app.graph.schedule import GraphSchedule, mean_consensus_deviation, regime_bound, regime_label
from app.graph.topology import (
    AdjacencyMatrix,
    Topology,
    metropolis_weights,
    named_topology,
    random_connected_topology,
    read_edge_list,
    uniform_matrix,
)
from app.models import (
    BvmRow,
    ContractionRow,
    CoverageRow,
    ExperimentConfig,
    ExperimentSummary,
    GraphBlock,
    LlnCltRow,
    ModelBlock,
    TimevaryRow,
    TrajectoryRecord,
)
from app.services.progress_monitor import start_progress_monitoring, stop_progress_monitoring
from app.services.results_store import ResultsStore
from app.services.rng import Purpose, stream
from app.statmodels.base import NetworkModel
from app.statmodels.detection import DetectionModel
from app.statmodels.gaussian import GaussianLocationModel
from app.statmodels.logistic import LogisticModel
from app.statmodels.truth import CorrectTruth, GaussianMisspecifiedTruth
from app.utils.errors import (
    BeliefError,
    ConfigInvalid,
    DisbayesError,
    GraphError,
    ModelError,
    NumericalFailure,
)

logger = logging.getLogger(__name__)

COVERAGE_BAND = 0.04
# switch probabilities compared for the slow-communication penalty
SLOW_LAM, FAST_LAM = 0.05, 0.5


# builders


def build_models(block: ModelBlock, m: int) -> NetworkModel:
    if block.kind == "gaussian":
        models = [GaussianLocationModel(block.sigma[j % len(block.sigma)]) for j in range(m)]
    elif block.kind == "logistic":
        models = [LogisticModel(block.dim) for _ in range(m)]
    else:
        if m != len(block.sensors):
            raise ConfigInvalid(
                f"detection networks have one agent per sensor ({len(block.sensors)}), got m={m}",
                [f"sweep.m: must equal the number of sensors ({len(block.sensors)})"],
            )
        models = [DetectionModel(z, block.sigma_of(j)) for j, z in enumerate(block.sensors)]
    return NetworkModel(models)


def build_truth(block: ModelBlock):
    if block.truth == "misspecified":
        return GaussianMisspecifiedTruth(mean0=float(block.theta0[0]), sigma0=block.sigma0)
    return CorrectTruth(np.asarray(block.theta0, dtype=float))


def build_prior(block: ModelBlock):
    """Configured prior, or N(0, I) for Gaussian and logistic agents and U([0,1]^2) for detection"""
    spec = block.prior
    if spec is None:
        if block.kind == "detection":
            return UniformPrior.unit_square()
        return GaussianPrior.isotropic(block.p, 1.0)
    if spec.kind == "gaussian":
        return GaussianPrior.isotropic(block.p, spec.var, spec.mean)
    if spec.lower is None or spec.upper is None:
        if block.kind == "detection":
            return UniformPrior.unit_square()
        raise ConfigInvalid("uniform prior needs bounds", ["model.prior: lower and upper are required"])
    if len(spec.lower) != block.p or len(spec.upper) != block.p:
        raise ConfigInvalid("uniform prior has the wrong dimension", [f"model.prior: bounds need {block.p} entries"])
    return UniformPrior(np.asarray(spec.lower), np.asarray(spec.upper))


def build_topology(block: GraphBlock, m: int) -> Topology:
    if block.family == "random":
        return random_connected_topology(m, block.edge_prob, stream(block.seed, m, Purpose.GRAPH))
    if block.family == "edge_list":
        topology = read_edge_list(block.edge_list)
        if topology.m != m:
            raise ConfigInvalid(
                f"edge list {block.edge_list} has {topology.m} agents, the model has {m}",
                [f"graph.edge_list: expected {m} agents"],
            )
        return topology
    return named_topology(block.family, m)


def build_adjacency(block: GraphBlock, topology: Topology) -> AdjacencyMatrix:
    if block.weights == "uniform":
        adjacency = uniform_matrix(topology.m)
        if not adjacency.support_within(topology):
            raise ConfigInvalid(
                "uniform weights J/m need a complete graph",
                [f"graph.weights: 'uniform' is not supported on a {block.family} graph"],
            )
        return adjacency
    return metropolis_weights(topology)


def build_schedule(block: GraphBlock, adjacency: AdjacencyMatrix, lam: float, switching: bool = False) -> GraphSchedule:
    if lam >= 1.0 and not switching:
        return GraphSchedule.static(adjacency)
    return GraphSchedule.bernoulli(adjacency, lam, block.seed)


@dataclass(frozen=True, eq=False)
class Setup:
    """Shared, read-only inputs of every unit in one (m, lam) cell"""

    m: int
    lam: float
    network: NetworkModel
    prior: object
    truth: object
    schedule: GraphSchedule


def build_setup(config: ExperimentConfig, m: int, lam: float, switching: bool = False) -> Setup:
    if config.run.metric == "kl_risk" and config.model.kind != "gaussian":
        raise ConfigInvalid(
            "the kl_risk metric needs gaussian agents",
            [f"run.metric: 'kl_risk' is not available for {config.model.kind} agents, use 'sq' or 'abs'"],
        )
    try:
        adjacency = build_adjacency(config.graph, build_topology(config.graph, m))
        return Setup(
            m=m,
            lam=lam,
            network=build_models(config.model, m),
            prior=build_prior(config.model),
            truth=build_truth(config.model),
            schedule=build_schedule(config.graph, adjacency, lam, switching),
        )
    except ConfigInvalid:
        raise
    except (GraphError, ModelError, BeliefError, OSError) as e:
        raise ConfigInvalid(f"cannot build the experiment: {e}", [str(e)]) from e


def _sizes(config: ExperimentConfig) -> List[int]:
    return list(config.sweep.m or [config.model.m])


def _lams(config: ExperimentConfig) -> List[float]:
    return [float(lam) for lam in (config.sweep.lam or [config.graph.lam])]


def _horizons(config: ExperimentConfig, default: Optional[Sequence[int]] = None) -> List[int]:
    ts = sorted(set(config.sweep.t or default or config.run.checkpoints))
    ts = [t for t in ts if t >= 1]
    if not ts:
        raise ConfigInvalid("experiment needs at least one positive horizon", ["run.checkpoints: no t >= 1"])
    return ts


# per-belief helpers


def _trajectory(config: ExperimentConfig, setup: Setup, replication: int, checkpoints: Sequence[int], track_ideal: bool):
    model = config.model
    return simulate(
        setup.network,
        setup.prior,
        setup.schedule.for_replication(replication),
        setup.truth,
        config.run.seed,
        replication,
        checkpoints,
        representation=model.representation,
        resolution=model.resolution or Config.GRID_RESOLUTION,
        learning_rate=model.learning_rate,
        track_ideal=track_ideal and model.representation == "natural",
    )


def _guarded(strict: bool, what: str, fn: Callable[[], float]) -> Optional[float]:
    """Run one diagnostic; outside strict mode a failure becomes an empty cell"""
    try:
        return fn()
    except DisbayesError as e:
        if strict:
            raise
        logger.warning("%s failed: %s", what, e.message)
    return None


def _estimate(belief, setup: Setup, strict: bool) -> MEstimate:
    estimate = estimate_for_belief(belief, setup.prior)
    if strict:
        estimate.raise_for_status()
    return estimate


def _laplace(belief, estimate: MEstimate, setup: Setup) -> LaplaceApprox:
    if isinstance(belief, GridBelief):
        fisher = average_fisher(setup.network.models, estimate.theta_hat)
        return LaplaceApprox.from_fisher(estimate.theta_hat, fisher, belief.step)
    return laplace_approx(belief, estimate)


def _posterior_mean(belief, strict: bool) -> List[float]:
    if isinstance(belief, GridBelief):
        return belief.mean().tolist()
    try:
        return np.asarray(belief.posterior_mean(), dtype=float).tolist()
    except DisbayesError:
        if strict:
            raise
    return [math.nan] * belief.dim_theta


def _neighborhood(kind: str) -> str:
    return "kl" if kind == "gaussian" else "distance"


def _kl_available(block) -> bool:
    """KL between beliefs has a closed form (gaussian) or a 1-D quadrature"""
    return block.kind == "gaussian" or block.p == 1


def _nan(value: Optional[float]) -> float:
    return math.nan if value is None else float(value)


# worker pool


def _run_unit(store: ResultsStore, key: Tuple, work: Callable[[Tuple], list]):
    rows = work(key)
    store.write_unit(key, rows)


def run_units(
    config: ExperimentConfig,
    experiment: str,
    keys: Sequence[Tuple],
    work: Callable[[Tuple], list],
    resume: bool = False,
) -> ResultsStore:
    """Run every unit not already on disk on a pool of run.workers threads"""
    store = ResultsStore(config.output.directory, experiment)
    if not resume:
        store.clear_units()
    pending = [key for key in keys if not (resume and store.has_unit(key))]
    monitor = start_progress_monitoring(experiment, len(keys))
    for _ in range(len(keys) - len(pending)):
        monitor.unit_done(skipped=True)
    if resume and len(pending) < len(keys):
        logger.info("resuming %s: %d of %d units already on disk", experiment, len(keys) - len(pending), len(keys))
    try:
        with ThreadPoolExecutor(max_workers=max(config.run.workers, 1)) as pool:
            futures = {pool.submit(_run_unit, store, key, work): key for key in pending}
            try:
                for future in as_completed(futures):
                    future.result()
                    monitor.unit_done()
            except BaseException:
                for future in futures:
                    future.cancel()
                raise
    finally:
        stop_progress_monitoring()
    return store


def _parse_cell(text: str):
    if text == "":
        return None
    if text in ("true", "false"):
        return text == "true"
    try:
        number = float(text)
    except ValueError:
        return text
    return int(number) if number.is_integer() and "." not in text and "e" not in text.lower() else number


def load_rows(store: ResultsStore, keys: Iterable[Tuple]) -> List[Dict]:
    """All unit rows in merge order, cells converted back to Python values"""
    rows = []
    for key in sorted(keys):
        for raw in store.read_unit(key):
            rows.append({name: _parse_cell(value) for name, value in raw.items()})
    return rows


def finish(
    config: ExperimentConfig,
    experiment: str,
    store: ResultsStore,
    keys: Sequence[Tuple],
    filename: str,
    row_model,
    summarize: Callable[[List[Dict]], Dict],
) -> ExperimentSummary:
    if "csv" in config.output.formats:
        store.merge(keys, filename, header=list(row_model.model_fields))
    rows = load_rows(store, keys)
    summary = ExperimentSummary(
        experiment=experiment,
        rows=len(rows),
        units=len(keys),
        results=summarize(rows),
        config=config.model_dump(),
    )
    if "json" in config.output.formats:
        store.write_summary(summary)
    logger.info("%s finished: %d rows from %d units", experiment, len(rows), len(keys))
    return summary


def _cells(config: ExperimentConfig, switching: bool = False) -> Dict[Tuple[int, float], Setup]:
    return {(m, lam): build_setup(config, m, lam, switching) for m in _sizes(config) for lam in _lams(config)}


def _unit_keys(cells: Dict[Tuple[int, float], Setup], replications: int) -> List[Tuple]:
    return [(m, lam, r) for (m, lam) in sorted(cells) for r in range(replications)]


def _group(rows: List[Dict], *fields: str) -> Dict[Tuple, List[Dict]]:
    groups: Dict[Tuple, List[Dict]] = {}
    for row in rows:
        groups.setdefault(tuple(row[f] for f in fields), []).append(row)
    return groups


def _finite(values: Iterable) -> np.ndarray:
    array = np.array([math.nan if v is None else float(v) for v in values], dtype=float)
    return array[np.isfinite(array)]


# experiments


def run_simulate(config: ExperimentConfig, resume: bool = False) -> ExperimentSummary:
    """Trajectory rows for every agent at every checkpoint of every replication"""
    run = config.run
    cells = _cells(config)
    keys = _unit_keys(cells, run.replications)
    kind = config.model.kind
    track_gamma = run.track_gamma and _kl_available(config.model)

    def work(key):
        m, lam, replication = key
        setup = cells[(m, lam)]
        rows = []
        for t, state, ideal in _trajectory(config, setup, replication, run.checkpoints, track_gamma):
            for agent in range(m):
                belief = state.belief(agent)
                estimate = _estimate(belief, setup, run.strict)
                record = {
                    "seed": run.seed, "replication": replication, "m": m, "lam": lam, "model": kind,
                    "agent": agent, "t": t,
                    "theta_hat": np.asarray(estimate.theta_hat, dtype=float).tolist(),
                    "posterior_mean": _posterior_mean(belief, run.strict),
                    "status": estimate.status, "boundary_flag": estimate.boundary,
                }
                if run.track_bvm:
                    record["tv_bvm"] = _guarded(
                        run.strict, "bvm distance",
                        lambda: bvm_tv(belief, _laplace(belief, estimate, setup)).tv_to_gaussian,
                    )
                if run.track_mass:
                    record["mass_eps"] = _guarded(
                        run.strict, "consistency mass",
                        lambda: consistency_mass(belief, setup.truth, setup.network.models, run.eps, _neighborhood(kind)),
                    )
                if run.track_gamma and ideal is not None and t > 0:
                    record["gamma_sq"] = _guarded(
                        run.strict, "gamma^2", lambda: kl_to_ideal(belief, ideal) / (m * t),
                    )
                rows.append(TrajectoryRecord(**record))
        return rows

    def summarize(rows):
        final = [row for row in rows if row["t"] == max(run.checkpoints)]
        statuses: Dict[str, int] = {}
        for row in final:
            statuses[row["status"]] = statuses.get(row["status"], 0) + 1
        return {
            "checkpoints": list(run.checkpoints),
            "final_statuses": statuses,
            "final_boundary_rate": float(np.mean([bool(r["boundary_flag"]) for r in final])) if final else math.nan,
        }

    store = run_units(config, "simulate", keys, work, resume)
    return finish(config, "simulate", store, keys, "trajectory.csv", TrajectoryRecord, summarize)


def run_bvm(config: ExperimentConfig, resume: bool = False) -> ExperimentSummary:
    """Distance of the rescaled belief to its Gaussian limit along the checkpoints"""
    run = config.run
    cells = _cells(config)
    keys = _unit_keys(cells, run.replications)
    ts = _horizons(config)
    misspecified = config.model.truth == "misspecified"

    def work(key):
        m, lam, replication = key
        setup = cells[(m, lam)]
        rows = []
        for t, state, _ in _trajectory(config, setup, replication, ts, False):
            belief = state.belief(run.agent)
            estimate = _estimate(belief, setup, run.strict)
            try:
                laplace = _laplace(belief, estimate, setup)
                if misspecified:
                    reports = bvm_tv_misspecified(belief, laplace, setup.truth.target())
                else:
                    reports = [bvm_tv(belief, laplace)]
            except NumericalFailure as e:
                if run.strict:
                    raise
                logger.warning("bvm distance failed at t=%d: %s", t, e.message)
                continue
            for report in reports:
                rows.append(BvmRow(
                    seed=run.seed, replication=replication, m=m, lam=lam, model=config.model.kind,
                    agent=run.agent, t=t, center=report.center, scale=report.scale,
                    tv_bvm=report.tv_to_gaussian, tail_mass=report.tail_mass,
                ))
        return rows

    def summarize(rows):
        cells_out = []
        for (m, lam, center), group in sorted(_group(rows, "m", "lam", "center").items()):
            by_t = _group(group, "t")
            horizons = sorted(t for (t,) in by_t)
            medians = [float(np.median(_finite(r["tv_bvm"] for r in by_t[(t,)]))) for t in horizons]
            cells_out.append({
                "m": m, "lam": lam, "center": center, "t": horizons, "median_tv": medians,
                "decreasing": len(medians) > 1 and medians[-1] < medians[0],
            })
        return {"convention": "l1", "cells": cells_out}

    store = run_units(config, "bvm", keys, work, resume)
    return finish(config, "bvm", store, keys, "bvm.csv", BvmRow, summarize)


def run_contraction(config: ExperimentConfig, resume: bool = False) -> ExperimentSummary:
    """Expected posterior loss and gamma^2 over the m x t sweep, with rate and constant fits"""
    run = config.run
    cells = _cells(config)
    keys = _unit_keys(cells, run.replications)
    ts = _horizons(config)
    kind = config.model.kind

    constants, baselines = {}, {}
    for cell, setup in cells.items():
        models = setup.network.models
        constants[cell] = _nan(_guarded(False, "approximation constant", lambda: approximation_constant(setup.truth, models)))
        baselines[cell] = _nan(_guarded(False, "baseline KL", lambda: baseline_kl(setup.truth, models)))

    def work(key):
        m, lam, replication = key
        setup = cells[(m, lam)]
        switch = lam if setup.schedule.mode == "bernoulli" else None
        nu = setup.schedule.base.nu
        rows = []
        for t, state, ideal in _trajectory(config, setup, replication, ts, _kl_available(config.model)):
            belief = state.belief(run.agent)
            loss = _guarded(
                run.strict, "posterior risk",
                lambda: posterior_risk(belief, setup.truth.target(), run.metric, setup.truth, setup.network.models),
            )
            kl = None if ideal is None else _guarded(run.strict, "KL to ideal", lambda: kl_to_ideal(belief, ideal))
            constant, baseline = constants[(m, lam)], baselines[(m, lam)]
            rows.append(ContractionRow(
                seed=run.seed, replication=replication, m=m, lam=lam, nu=nu, model=kind,
                agent=run.agent, t=t, metric=run.metric, expected_loss=_nan(loss),
                kl_to_ideal=kl, gamma_sq=None if kl is None else kl / (m * t),
                baseline=baseline,
                gamma_bound=approximation_bound(m, nu, t, constant, switch),
                loss_bound=contraction_bound(m, nu, t, constant, baseline, switch),
            ))
        return rows

    def summarize(rows):
        cells_out = []
        for (m, lam), group in sorted(_group(rows, "m", "lam").items()):
            by_t = _group(group, "t")
            horizons = sorted(t for (t,) in by_t)
            losses = [float(np.mean(_finite(r["expected_loss"] for r in by_t[(t,)]))) for t in horizons]
            gammas = [_finite(r["gamma_sq"] for r in by_t[(t,)]) for t in horizons]
            gamma_means = [float(g.mean()) if g.size else math.nan for g in gammas]
            bounds = [float(by_t[(t,)][0]["gamma_bound"]) for t in horizons]
            baseline = float(group[0]["baseline"])
            cell = {
                "m": m, "lam": lam, "metric": run.metric, "t": horizons, "mean_loss": losses,
                "gamma_sq": gamma_means, "gamma_bound": bounds, "baseline": baseline,
            }
            checked = [(g, b) for g, b in zip(gamma_means, bounds) if math.isfinite(g) and math.isfinite(b)]
            # None when no horizon has both a gamma^2 estimate and a finite bound
            cell["gamma_within_bound"] = all(g <= b for g, b in checked) if checked else None
            if len(horizons) > 1 and all(v > 0 for v in losses):
                cell["slope"] = fit_slope(horizons, losses)
                cell.update(fit_asymptote(horizons, losses))
                if baseline > 0:
                    cell["asymptote_ratio"] = cell["asymptote"] / baseline
                extra = [g if math.isfinite(g) else 0.0 for g in gamma_means]
                scales = [1.0 / t + g + (baseline if math.isfinite(baseline) else 0.0) for t, g in zip(horizons, extra)]
                cell.update(fit_constant(losses, scales))
            cells_out.append(cell)
        return {"cells": cells_out}

    store = run_units(config, "contraction", keys, work, resume)
    return finish(config, "contraction", store, keys, "contraction.csv", ContractionRow, summarize)


def _compared_lams(lams: Sequence[float]) -> Optional[Tuple[float, float]]:
    """(0.05, 0.5) when both were swept, else the smallest and largest lam"""
    if len(lams) < 2:
        return None
    close = [next((lam for lam in lams if math.isclose(lam, target)), None) for target in (SLOW_LAM, FAST_LAM)]
    if None not in close:
        return close[0], close[1]
    return min(lams), max(lams)


def run_timevary(config: ExperimentConfig, resume: bool = False) -> ExperimentSummary:
    """gamma^2 under Bernoulli-switched communication across the lam sweep"""
    run = config.run
    cells = _cells(config, switching=True)
    keys = _unit_keys(cells, run.replications)
    ts = _horizons(config)
    constants = {
        cell: _nan(_guarded(False, "approximation constant", lambda: approximation_constant(s.truth, s.network.models)))
        for cell, s in cells.items()
    }

    def work(key):
        m, lam, replication = key
        setup = cells[(m, lam)]
        nu = setup.schedule.base.nu
        rows = []
        for t, state, ideal in _trajectory(config, setup, replication, ts, _kl_available(config.model)):
            belief = state.belief(run.agent)
            kl = None if ideal is None else _guarded(run.strict, "KL to ideal", lambda: kl_to_ideal(belief, ideal))
            bound = _guarded(
                False, "switching bound",
                lambda: gamma_sq_time_varying_bound(m, lam, nu, t, constants[(m, lam)]),
            )
            rows.append(TimevaryRow(
                seed=run.seed, replication=replication, m=m, lam=lam, model=config.model.kind,
                agent=run.agent, t=t, nu=nu, regime=regime_label(m, lam), kl_to_ideal=kl,
                gamma_sq=None if kl is None else kl / (m * t), bound=_nan(bound),
            ))
        return rows

    def summarize(rows):
        cells_out = []
        for (m, t), group in sorted(_group(rows, "m", "t").items()):
            by_lam = _group(group, "lam")
            lams = sorted(lam for (lam,) in by_lam)
            scaled = []
            for lam in lams:
                values = _finite(r["gamma_sq"] for r in by_lam[(lam,)])
                scaled.append(float(values.mean()) * t if values.size else math.nan)
            compared = _compared_lams(lams)
            verdict = None
            if compared is not None:
                slow, fast = (scaled[lams.index(lam)] for lam in compared)
                if math.isfinite(slow) and math.isfinite(fast):
                    verdict = slow > fast
            cells_out.append({
                "m": m, "t": t, "lam": lams, "gamma_sq_t": scaled,
                "bound": [float(by_lam[(lam,)][0]["bound"]) for lam in lams],
                "compared_lam": None if compared is None else list(compared),
                "slow_exceeds_fast": verdict,
            })
        deviations = []
        for (m, lam), setup in sorted(cells.items()):
            if m < 2:
                continue
            seeds = [setup.schedule.for_replication(r).seed for r in range(run.replications)]
            observed = mean_consensus_deviation(setup.schedule.base, lam, max(ts), seeds)
            bound = regime_bound(m, lam, setup.schedule.base.nu)
            deviations.append({
                "m": m, "lam": lam, "regime": regime_label(m, lam),
                "max_mean_deviation": float(np.max(observed)), "regime_bound": bound,
                "within_bound": bool(np.max(observed) <= bound),
            })
        return {"cells": cells_out, "consensus": deviations}

    store = run_units(config, "timevary", keys, work, resume)
    return finish(config, "timevary", store, keys, "timevary.csv", TimevaryRow, summarize)


def run_coverage(config: ExperimentConfig, resume: bool = False) -> ExperimentSummary:
    """Frequentist coverage of the level 1 - alpha credible regions"""
    run = config.run
    cells = _cells(config)
    keys = _unit_keys(cells, run.replications)
    ts = _horizons(config, default=[run.t_max])
    alphas = list(config.sweep.alpha or [run.alpha])

    def work(key):
        m, lam, replication = key
        setup = cells[(m, lam)]
        theta0 = setup.truth.target()
        rows = []
        for t, state, _ in _trajectory(config, setup, replication, ts, False):
            belief = state.belief(run.agent)
            estimate = _estimate(belief, setup, run.strict)
            try:
                laplace = _laplace(belief, estimate, setup)
            except NumericalFailure as e:
                if run.strict:
                    raise
                logger.warning("no credible region for replication %d at t=%d: %s", replication, t, e.message)
                continue
            for alpha in alphas:
                outcome = region_outcome(belief, theta0, alpha, m, laplace)
                rows.append(CoverageRow(
                    seed=run.seed, replication=replication, m=m, lam=lam, model=config.model.kind,
                    agent=run.agent, t=t, alpha=alpha, **outcome,
                ))
        return rows

    def summarize(rows):
        reports = []
        for (m, lam, t, alpha), group in sorted(_group(rows, "m", "lam", "t", "alpha").items()):
            report = summarize_outcomes(group, alpha, t, m, config.model.truth == "misspecified").to_dict()
            nominal = 1.0 - alpha
            report.update({
                "lam": lam,
                "nominal": nominal,
                "within_band": abs(report["coverage"]["network"] - nominal) <= COVERAGE_BAND,
            })
            reports.append(report)
        return {"band": COVERAGE_BAND, "cells": reports}

    store = run_units(config, "coverage", keys, work, resume)
    return finish(config, "coverage", store, keys, "coverage.csv", CoverageRow, summarize)


def run_lln_clt(config: ExperimentConfig, resume: bool = False) -> ExperimentSummary:
    """Network-weighted running means and standardized sums of scalar streams"""
    run = config.run
    cells = _cells(config)
    keys = _unit_keys(cells, run.replications)
    t = run.t_max

    def stream_means(m: int) -> np.ndarray:
        if config.model.means is not None and len(config.model.means) == m:
            return np.asarray(config.model.means, dtype=float)
        return np.arange(m, dtype=float)

    def stream_sds(m: int) -> List[float]:
        return [config.model.sigma[j % len(config.model.sigma)] for j in range(m)]

    def work(key):
        m, lam, replication = key
        setup = cells[(m, lam)]
        out = lln_clt_replication(m, t, setup.schedule, stream_means(m), stream_sds(m), run.seed, replication)
        return [
            LlnCltRow(
                seed=run.seed, replication=replication, m=m, lam=lam, agent=agent, t=t,
                z_mean=float(out["z_mean"][agent]), clt_stat=float(out["clt_stat"][agent]),
            )
            for agent in range(m)
        ]

    def summarize(rows):
        cells_out = []
        for (m, lam), group in sorted(_group(rows, "m", "lam").items()):
            network_mean = float(stream_means(m).mean())
            errors = _finite(abs(r["z_mean"] - network_mean) for r in group)
            stats = _finite(r["clt_stat"] for r in group if r["agent"] == run.agent)
            if stats.size > 1:
                ks = kstest(stats, "norm")
                ks_distance, ks_pvalue = float(ks.statistic), float(ks.pvalue)
            else:
                ks_distance, ks_pvalue = math.nan, math.nan
            cells_out.append({
                "m": m, "lam": lam, "t": t, "network_mean": network_mean,
                "lln_max_error": float(errors.max()) if errors.size else math.nan,
                "ks_distance": ks_distance, "ks_pvalue": ks_pvalue, "agent": run.agent,
            })
        return {"cells": cells_out}

    store = run_units(config, "lln-clt", keys, work, resume)
    return finish(config, "lln-clt", store, keys, "lln_clt.csv", LlnCltRow, summarize)


EXPERIMENTS: Dict[str, Callable[[ExperimentConfig, bool], ExperimentSummary]] = {
    "simulate": run_simulate,
    "bvm": run_bvm,
    "contraction": run_contraction,
    "timevary": run_timevary,
    "coverage": run_coverage,
    "lln-clt": run_lln_clt,
}


def run_experiment(kind: str, config: ExperimentConfig, resume: bool = False) -> ExperimentSummary:
    if kind not in EXPERIMENTS:
        raise ConfigInvalid(f"unknown experiment '{kind}'", [f"experiment: expected one of {sorted(EXPERIMENTS)}"])
    logger.info(f"Running {kind} experiment '{config.name}' into {config.output.directory}")
    return EXPERIMENTS[kind](config, resume)
