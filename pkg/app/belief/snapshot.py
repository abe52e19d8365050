"""JSON snapshots of single-agent beliefs."""

from pathlib import Path
from typing import List, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict

from app.belief.grid import GridBelief
from app.belief.natural import AtomTable, NaturalBelief
from app.statmodels.base import NetworkModel
from app.utils.errors import RepresentationMismatch, ResultsIOError


class BeliefSnapshot(BaseModel):
    """Serialized belief: {kind, step, agent, chi | logw, w, box}"""

    model_config = ConfigDict(ser_json_inf_nan="constants")

    kind: str
    step: int
    agent: int
    chi: Optional[List[float]] = None
    w: Optional[List[float]] = None
    logw: Optional[List[float]] = None
    box: Optional[List[List[float]]] = None
    n_per_dim: Optional[int] = None


def snapshot_belief(belief: Union[NaturalBelief, GridBelief]) -> BeliefSnapshot:
    if isinstance(belief, NaturalBelief):
        return BeliefSnapshot(
            kind="natural",
            step=belief.step,
            agent=belief.agent,
            chi=[float(v) for v in belief.chi],
            w=[float(v) for v in belief.w],
        )
    if isinstance(belief, GridBelief):
        return BeliefSnapshot(
            kind="grid",
            step=belief.step,
            agent=belief.agent,
            logw=[float(v) for v in belief.logw],
            box=[[float(v) for v in belief.lower], [float(v) for v in belief.upper]],
            n_per_dim=belief.n,
        )
    raise RepresentationMismatch(f"cannot snapshot {type(belief).__name__}")


def restore_belief(
    snapshot: BeliefSnapshot,
    network: Optional[NetworkModel] = None,
    prior=None,
    atoms: Optional[AtomTable] = None,
) -> Union[NaturalBelief, GridBelief]:
    """Rebuild a belief; natural snapshots need the network, prior and atom table they came from"""
    if snapshot.kind == "grid":
        return GridBelief(
            np.array(snapshot.box[0]), np.array(snapshot.box[1]), snapshot.n_per_dim,
            np.array(snapshot.logw), step=snapshot.step, agent=snapshot.agent,
        )
    if snapshot.kind == "natural":
        if network is None or prior is None:
            raise RepresentationMismatch("natural snapshots need their network model and prior")
        return NaturalBelief(
            network=network,
            atoms=atoms if atoms is not None else AtomTable.per_agent(network.m),
            chi=np.array(snapshot.chi),
            w=np.array(snapshot.w),
            prior=prior,
            step=snapshot.step,
            agent=snapshot.agent,
        )
    raise RepresentationMismatch(f"unknown snapshot kind '{snapshot.kind}'")


def save_snapshot(snapshot: BeliefSnapshot, path: Union[str, Path]):
    try:
        Path(path).write_text(snapshot.model_dump_json())
    except OSError as e:
        raise ResultsIOError(f"could not write snapshot {path}: {e}") from e


def load_snapshot(path: Union[str, Path]) -> BeliefSnapshot:
    try:
        return BeliefSnapshot.model_validate_json(Path(path).read_text())
    except OSError as e:
        raise ResultsIOError(f"could not read snapshot {path}: {e}") from e
