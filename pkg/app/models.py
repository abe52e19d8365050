from datetime import datetime
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

DEFAULT_SENSORS = [[0.1, 0.1], [0.9, 0.2], [0.4, 0.9]]


class PriorBlock(BaseModel):
    """Common prior of every agent"""
    kind: Literal["gaussian", "uniform"] = "gaussian"
    mean: float = 0.0
    var: float = Field(1.0, gt=0)
    lower: Optional[List[float]] = None
    upper: Optional[List[float]] = None


class ModelBlock(BaseModel):
    """Agent models and the data-generating truth"""
    kind: Literal["gaussian", "logistic", "detection"] = "gaussian"
    m: int = Field(4, ge=1)
    sigma: List[float] = Field(default_factory=lambda: [1.0])
    dim: int = Field(2, ge=1)
    sensors: Optional[List[List[float]]] = None
    theta0: Optional[List[float]] = None
    truth: Literal["correct", "misspecified"] = "correct"
    sigma0: float = Field(2.0, gt=0)
    prior: Optional[PriorBlock] = None
    representation: Literal["natural", "grid"] = "natural"
    resolution: Optional[int] = Field(None, ge=3)
    learning_rate: float = Field(1.0, gt=0)
    means: Optional[List[float]] = None

    @field_validator("sigma")
    @classmethod
    def positive_scales(cls, v):
        if not v or any(s <= 0 for s in v):
            raise ValueError("every sigma must be positive")
        return v

    @model_validator(mode="after")
    def consistent_shapes(self):
        if self.kind == "detection":
            if self.sensors is None:
                self.sensors = [list(z) for z in DEFAULT_SENSORS]
            if any(len(z) != 2 or min(z) < 0 or max(z) > 1 for z in self.sensors):
                raise ValueError("sensors must be points of [0,1]^2")
            self.m = len(self.sensors)
            if self.theta0 is None:
                self.theta0 = [0.5, 0.45]
            if self.sigma == [1.0]:
                self.sigma = [0.1]
        elif self.theta0 is None:
            self.theta0 = [0.5] if self.kind == "gaussian" else [1.0] + [-0.5] * (self.dim - 1)
        if self.means is not None and len(self.means) != self.m:
            raise ValueError(f"means needs {self.m} entries, got {len(self.means)}")
        if len(self.sigma) not in (1, self.m):
            raise ValueError(f"sigma needs 1 or {self.m} entries, got {len(self.sigma)}")
        if self.truth == "misspecified" and self.kind != "gaussian":
            raise ValueError("misspecified truth is only available for gaussian agents")
        if len(self.theta0) != self.p:
            raise ValueError(f"theta0 needs {self.p} entries, got {len(self.theta0)}")
        return self

    @property
    def p(self) -> int:
        return {"gaussian": 1, "logistic": self.dim, "detection": 2}[self.kind]

    def sigma_of(self, agent: int) -> float:
        return self.sigma[0] if len(self.sigma) == 1 else self.sigma[agent]


class GraphBlock(BaseModel):
    """Communication topology and switching schedule"""
    family: Literal["complete", "ring", "path", "star", "random", "edge_list"] = "ring"
    edge_list: Optional[str] = None
    edge_prob: float = Field(0.5, ge=0, le=1)
    weights: Literal["metropolis", "uniform"] = "metropolis"
    lam: float = Field(1.0, ge=0, le=1)
    seed: int = 0

    @model_validator(mode="after")
    def edge_list_path(self):
        if self.family == "edge_list" and not self.edge_list:
            raise ValueError("family 'edge_list' needs an edge_list path")
        return self


class RunBlock(BaseModel):
    """Horizon, checkpoints, replications and diagnostics to record"""
    t_max: int = Field(100, ge=1)
    checkpoints: Optional[List[int]] = None
    replications: int = Field(1, ge=1)
    workers: int = Field(1, ge=1)
    seed: int = 0
    strict: bool = False
    agent: int = Field(0, ge=0)
    alpha: float = Field(0.1, gt=0, lt=1)
    eps: float = Field(0.1, gt=0)
    metric: Literal["sq", "abs", "kl_risk"] = "sq"
    track_bvm: bool = False
    track_mass: bool = False
    track_gamma: bool = False

    @model_validator(mode="after")
    def ordered_checkpoints(self):
        if self.checkpoints is None:
            self.checkpoints = [self.t_max]
        if any(b <= a for a, b in zip(self.checkpoints, self.checkpoints[1:])):
            raise ValueError("checkpoints must be strictly increasing")
        if self.checkpoints and (self.checkpoints[0] < 0 or self.checkpoints[-1] > self.t_max):
            raise ValueError(f"checkpoints must lie in [0, t_max={self.t_max}]")
        return self


class OutputBlock(BaseModel):
    """Where results go"""
    directory: str = "results"
    formats: List[Literal["csv", "json"]] = Field(default_factory=lambda: ["csv", "json"])


class SweepBlock(BaseModel):
    """Grid of coordinates an experiment iterates over"""
    m: Optional[List[int]] = None
    t: Optional[List[int]] = None
    lam: Optional[List[float]] = None
    alpha: Optional[List[float]] = None

    @field_validator("m")
    @classmethod
    def positive_m(cls, v):
        if v is not None and any(m < 1 for m in v):
            raise ValueError("network sizes must be at least 1")
        return v

    @field_validator("t")
    @classmethod
    def positive_t(cls, v):
        if v is not None and any(t < 1 for t in v):
            raise ValueError("horizons must be at least 1")
        return v

    @field_validator("lam")
    @classmethod
    def unit_lam(cls, v):
        if v is not None and any(not 0 <= lam <= 1 for lam in v):
            raise ValueError("lam values must lie in [0, 1]")
        return v

    @field_validator("alpha")
    @classmethod
    def unit_alpha(cls, v):
        if v is not None and any(not 0 < a < 1 for a in v):
            raise ValueError("alpha values must lie in (0, 1)")
        return v


class ExperimentConfig(BaseModel):
    """One experiment file"""
    model_config = ConfigDict(extra="forbid")

    name: str = "experiment"
    model: ModelBlock = Field(default_factory=ModelBlock)
    graph: GraphBlock = Field(default_factory=GraphBlock)
    run: RunBlock = Field(default_factory=RunBlock)
    output: OutputBlock = Field(default_factory=OutputBlock)
    sweep: SweepBlock = Field(default_factory=SweepBlock)

    @model_validator(mode="after")
    def agent_in_range(self):
        sizes = self.sweep.m or [self.model.m]
        if self.run.agent >= min(sizes):
            raise ValueError(f"run.agent={self.run.agent} is not an agent of every swept network")
        return self


# Result rows. Field order is the CSV column order; list fields expand to
# name_1 .. name_p.


class TrajectoryRecord(BaseModel):
    """One agent at one checkpoint of one replication"""
    seed: int
    replication: int
    m: int
    lam: float
    model: str
    agent: int
    t: int
    theta_hat: List[float]
    posterior_mean: List[float]
    status: str
    boundary_flag: bool
    tv_bvm: Optional[float] = None
    mass_eps: Optional[float] = None
    gamma_sq: Optional[float] = None


class BvmRow(BaseModel):
    seed: int
    replication: int
    m: int
    lam: float
    model: str
    agent: int
    t: int
    center: str
    scale: float
    tv_bvm: float
    tail_mass: float


class ContractionRow(BaseModel):
    seed: int
    replication: int
    m: int
    lam: float
    nu: float
    model: str
    agent: int
    t: int
    metric: str
    expected_loss: float
    kl_to_ideal: Optional[float] = None
    gamma_sq: Optional[float] = None
    baseline: float
    gamma_bound: float
    loss_bound: float


class TimevaryRow(BaseModel):
    seed: int
    replication: int
    m: int
    lam: float
    model: str
    agent: int
    t: int
    nu: float
    regime: str
    kl_to_ideal: Optional[float] = None
    gamma_sq: Optional[float] = None
    bound: float


class CoverageRow(BaseModel):
    seed: int
    replication: int
    m: int
    lam: float
    model: str
    agent: int
    t: int
    alpha: float
    distance_sq: float
    radius_agent: float
    radius_network: float
    covered_agent: bool
    covered_network: bool


class LlnCltRow(BaseModel):
    seed: int
    replication: int
    m: int
    lam: float
    agent: int
    t: int
    z_mean: float
    clt_stat: float


class ExperimentSummary(BaseModel):
    """summary.json contents"""
    model_config = ConfigDict(ser_json_inf_nan="null")

    experiment: str
    created: str = Field(default_factory=lambda: datetime.now().isoformat())
    rows: int
    units: int
    results: Dict[str, Any] = Field(default_factory=dict)
    config: Dict[str, Any] = Field(default_factory=dict)


# HTTP surface


class HealthResponse(BaseModel):
    """Response model for health check endpoint"""
    status: str
    timestamp: str
    service: str


class GraphAnalyzeRequest(BaseModel):
    """Request model for the graph analysis endpoint"""
    family: Literal["complete", "ring", "path", "star"] = "ring"
    m: int = Field(4, ge=1, le=512)
    lam: float = Field(1.0, ge=0, le=1)


class GraphAnalyzeResponse(BaseModel):
    """Response model for the graph analysis endpoint"""
    success: bool
    m: int
    weights: List[List[float]]
    nu: float
    delta: float
    static_bound: float
    regime: str
    regime_bound: Optional[float] = None
