"""Network-wide belief state and the distributed Bayes update.

Weight convention: ``A[i, j]`` is the exponent agent j puts on agent i's
belief (row i sends, column j receives). Every update therefore mixes with
``A.T`` acting on the stacked per-agent arrays.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Any, List, Optional, Sequence, Union

import numpy as np

from app.belief.grid import DEFAULT_RESOLUTION, GridBelief
from app.belief.natural import AtomTable, NaturalBelief
from app.belief.priors import UniformPrior
from app.graph.topology import AdjacencyMatrix
from app.statmodels.base import NetworkModel
from app.utils.errors import ObservationOutOfSupport, RepresentationMismatch

logger = logging.getLogger(__name__)


def _weights(a: Union[AdjacencyMatrix, np.ndarray]) -> np.ndarray:
    return a.w if isinstance(a, AdjacencyMatrix) else np.asarray(a, dtype=float)


@dataclass(frozen=True, eq=False)
class NetworkState:
    """Beliefs of all agents after ``step`` updates, stacked by agent.

    Natural representation: ``chi`` is (m, D) and ``w`` is (m, atoms).
    Grid representation: ``logw`` is (m, nodes) over one shared lattice.
    """

    network: NetworkModel
    prior: object
    representation: str = "natural"
    step: int = 0
    chi: Optional[np.ndarray] = None
    w: Optional[np.ndarray] = None
    atoms: Optional[AtomTable] = None
    grid: Optional[GridBelief] = None
    logw: Optional[np.ndarray] = None
    learning_rate: float = 1.0
    _likelihoods: list = field(default_factory=list, repr=False)

    @property
    def m(self) -> int:
        return self.network.m

    @property
    def beliefs(self) -> List[Union[NaturalBelief, GridBelief]]:
        return [self.belief(j) for j in range(self.m)]

    def belief(self, agent: int) -> Union[NaturalBelief, GridBelief]:
        if self.representation == "natural":
            return NaturalBelief(
                network=self.network,
                atoms=self.atoms,
                chi=self.chi[agent],
                w=self.w[agent],
                prior=self.prior,
                step=self.step,
                agent=agent,
                learning_rate=self.learning_rate,
            )
        return self.grid.with_values(self.logw[agent], step=self.step, agent=agent)

    def grid_likelihood(self, agent: int):
        """x -> log p^j(x | node) over the shared lattice, built once per agent"""
        if not self._likelihoods:
            nodes = self.grid.nodes()
            for model in self.network.models:
                if hasattr(model, "loglik_grid"):
                    self._likelihoods.append(model.loglik_grid(nodes))
                else:
                    self._likelihoods.append(
                        lambda x, model=model: np.array([model.loglik(node, x) for node in nodes])
                    )
        return self._likelihoods[agent]


def initial_state(
    network: NetworkModel,
    prior,
    representation: str = "natural",
    resolution: int = DEFAULT_RESOLUTION,
    learning_rate: float = 1.0,
) -> NetworkState:
    """All agents start from the (merged) prior"""
    m = network.m
    if representation == "natural":
        if network.kind == "logistic":
            atoms = AtomTable.empty(network.dim_theta)
            w = np.zeros((m, 0))
        else:
            atoms = AtomTable.per_agent(m)
            w = np.zeros((m, m))
        return NetworkState(
            network=network, prior=prior, chi=np.zeros((m, network.dim_stat)),
            w=w, atoms=atoms, learning_rate=learning_rate,
        )
    if representation == "grid":
        if isinstance(prior, UniformPrior):
            lower, upper = prior.lower, prior.upper
        else:
            raise RepresentationMismatch("grid beliefs need a uniform prior that fixes the parameter box")
        grid = GridBelief.uniform(lower, upper, resolution)
        logw = np.tile(grid.logw, (m, 1))
        return NetworkState(
            network=network, prior=prior, representation="grid",
            grid=grid, logw=logw, learning_rate=learning_rate,
        )
    raise RepresentationMismatch(f"unknown belief representation '{representation}'")


def grid_state_from_prior(network: NetworkModel, prior, lower, upper, resolution: int) -> NetworkState:
    """Grid representation of an arbitrary prior restricted to a box"""
    grid = GridBelief.from_log_density(prior.log_density_batch, lower, upper, resolution)
    return NetworkState(
        network=network, prior=prior, representation="grid",
        grid=grid, logw=np.tile(grid.logw, (network.m, 1)),
    )


def _check_observations(state: NetworkState, observations: Sequence[Any], a: np.ndarray):
    if len(observations) != state.m:
        raise RepresentationMismatch(f"expected {state.m} observations, got {len(observations)}")
    if a.shape != (state.m, state.m):
        raise RepresentationMismatch(f"consensus matrix shape {a.shape} does not match {state.m} agents")
    for j, (model, x) in enumerate(zip(state.network.models, observations)):
        if not model.observation_in_support(x):
            raise ObservationOutOfSupport(f"agent {j}: observation {x!r} outside the model support")


def distributed_update(
    state: NetworkState,
    observations: Sequence[Any],
    a_t: Union[AdjacencyMatrix, np.ndarray],
    learning_rate: Optional[float] = None,
) -> NetworkState:
    """One round of the distributed Bayes rule, returning a fresh state.

    Each agent multiplies its new likelihood (raised to 1/learning_rate) by
    the A-weighted geometric mean of the step-t beliefs.
    """
    a = _weights(a_t)
    _check_observations(state, observations, a)
    rate = state.learning_rate if learning_rate is None else learning_rate
    scale = 1.0 / rate
    network = state.network

    if state.representation == "natural":
        stats = np.vstack([network.suff_stat(j, x) for j, x in enumerate(observations)])
        chi = a.T @ state.chi + scale * stats
        mixed = a.T @ state.w
        if state.atoms.observation_atoms:
            covariates = np.vstack([
                np.atleast_1d(model.covariate_of(x)) for model, x in zip(network.models, observations)
            ])
            atoms = state.atoms.extend(np.arange(state.m), covariates)
            w = np.hstack([mixed, scale * np.eye(state.m)])
        else:
            atoms = state.atoms
            w = mixed + scale * np.eye(state.m)
        return replace(state, step=state.step + 1, chi=chi, w=w, atoms=atoms, learning_rate=rate)

    if state.representation == "grid":
        finite = np.all(np.isfinite(state.logw), axis=0)
        logw = np.full_like(state.logw, -np.inf)
        logw[:, finite] = a.T @ state.logw[:, finite]
        for j, x in enumerate(observations):
            logw[j, finite] += scale * state.grid_likelihood(j)(x)[finite]
        log_weights = state.grid.log_weights()[finite]
        for j in range(state.m):
            shift = np.max(logw[j, finite])
            logw[j, finite] -= shift + np.log(np.sum(np.exp(logw[j, finite] - shift + log_weights)))
        return replace(state, step=state.step + 1, logw=logw, learning_rate=rate)

    raise RepresentationMismatch(f"unknown belief representation '{state.representation}'")


def ideal_posterior(network: NetworkModel, prior, data: Sequence[Sequence[Any]]) -> NaturalBelief:
    """Posterior under the 1/m geometric mean of all agents' likelihoods.

    ``data[k][j]`` is agent j's observation at step k + 1.
    """
    m = network.m
    t = len(data)
    chi = np.zeros(network.dim_stat)
    for row in data:
        if len(row) != m:
            raise RepresentationMismatch(f"each step needs {m} observations, got {len(row)}")
        for j, x in enumerate(row):
            chi += network.suff_stat(j, x)
    chi /= m
    if network.kind == "logistic":
        covariates = np.array([np.atleast_1d(x.x) for row in data for x in row]).reshape(-1, network.dim_theta)
        owners = np.tile(np.arange(m), t)
        atoms = AtomTable(owners=owners, covariates=covariates)
        w = np.full(len(owners), 1.0 / m)
    else:
        atoms = AtomTable.per_agent(m)
        w = np.full(m, t / m)
    return NaturalBelief(network=network, atoms=atoms, chi=chi, w=w, prior=prior, step=t, agent=-1)


def ideal_from_state(state: NetworkState, stat_sum: np.ndarray) -> NaturalBelief:
    """Ideal posterior from a running sum of network statistics, without storing the data"""
    m = state.m
    if state.atoms.observation_atoms:
        w = np.full(len(state.atoms), 1.0 / m)
    else:
        w = np.full(m, state.step / m)
    return NaturalBelief(
        network=state.network, atoms=state.atoms, chi=stat_sum / m, w=w,
        prior=state.prior, step=state.step, agent=-1,
    )
