"""Replication driver: stream observations through the distributed update."""

import logging
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np

from app.belief.grid import DEFAULT_RESOLUTION
from app.belief.natural import NaturalBelief
from app.belief.network import NetworkState, distributed_update, ideal_from_state, initial_state
from app.graph.schedule import GraphSchedule
from app.statmodels.base import NetworkModel
from app.statmodels.truth import ObservationSource

logger = logging.getLogger(__name__)


def simulate(
    network: NetworkModel,
    prior,
    schedule: GraphSchedule,
    truth,
    seed: int,
    replication: int,
    checkpoints: Sequence[int],
    representation: str = "natural",
    resolution: int = DEFAULT_RESOLUTION,
    learning_rate: float = 1.0,
    track_ideal: bool = False,
) -> Iterator[Tuple[int, NetworkState, Optional[NaturalBelief]]]:
    """Yield (t, state, ideal posterior or None) at every checkpoint.

    Step t mixes with A_{t-1} from the schedule. The ideal posterior is only
    available for the natural representation.
    """
    state = initial_state(network, prior, representation, resolution, learning_rate)
    source = ObservationSource(network.models, truth, seed, replication)
    stat_sum = np.zeros(network.dim_stat)
    wanted = set(checkpoints)
    horizon = max(checkpoints) if checkpoints else 0
    if 0 in wanted:
        yield 0, state, _ideal(state, stat_sum, track_ideal)
    for step in range(1, horizon + 1):
        observations = source.at(step)
        state = distributed_update(state, observations, schedule.weights_at(step - 1))
        if track_ideal:
            for j, x in enumerate(observations):
                stat_sum += network.suff_stat(j, x)
        if step in wanted:
            yield step, state, _ideal(state, stat_sum, track_ideal)


def _ideal(state: NetworkState, stat_sum: np.ndarray, track_ideal: bool) -> Optional[NaturalBelief]:
    if not track_ideal or state.representation != "natural":
        return None
    return ideal_from_state(state, stat_sum.copy())
