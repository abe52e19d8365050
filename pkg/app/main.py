import logging
import math
from datetime import datetime

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response

from app.config import Config
from app.graph.schedule import regime_bound, regime_label
from app.graph.topology import metropolis_weights, named_topology, static_deviation_bound
from app.models import ExperimentConfig, ExperimentSummary, GraphAnalyzeRequest, GraphAnalyzeResponse, HealthResponse
from app.services.experiment_service import run_experiment
from app.services.progress_monitor import get_progress_status
from app.utils.error_handler import ErrorHandler
from app.utils.errors import DisbayesError

logger = logging.getLogger(__name__)

app = FastAPI(title="disbayes")

app.add_middleware(
    CORSMiddleware,
    allow_origins=Config.ALLOW_ORIGINS,
    allow_credentials=Config.ALLOW_CREDENTIALS,
    allow_methods=Config.ALLOW_METHODS,
    allow_headers=Config.ALLOW_HEADERS,
)


@app.exception_handler(DisbayesError)
async def disbayes_error_handler(request: Request, exc: DisbayesError):
    logger.error(f"{request.url.path} failed: {exc.message}")
    return JSONResponse(status_code=ErrorHandler.http_status(exc), content=ErrorHandler.format_error(exc))


@app.get("/api/v1/health", response_model=HealthResponse)
async def health():
    """Service status"""
    return HealthResponse(status="ok", timestamp=datetime.now().isoformat(), service="disbayes")


@app.post("/api/v1/graph/analyze", response_model=GraphAnalyzeResponse)
async def analyze_graph(request: GraphAnalyzeRequest):
    """Metropolis weights of a named graph with its mixing constants and deviation bounds"""
    adjacency = metropolis_weights(named_topology(request.family, request.m))
    bound = None
    if request.m >= 2:
        bound = regime_bound(request.m, request.lam, adjacency.nu)
    return GraphAnalyzeResponse(
        success=True,
        m=adjacency.m,
        weights=adjacency.w.tolist(),
        nu=adjacency.nu,
        delta=adjacency.delta,
        static_bound=static_deviation_bound(adjacency.m, adjacency.nu),
        regime=regime_label(request.m, request.lam),
        regime_bound=bound if bound is not None and math.isfinite(bound) else None,
    )


@app.post("/api/v1/experiments/{kind}", response_model=ExperimentSummary)
def experiment(kind: str, config: ExperimentConfig, resume: bool = False):
    """Run one experiment into the configured output directory and return its summary"""
    summary = run_experiment(kind, config, resume=resume)
    # undefined statistics (NaN) go out as null
    return Response(summary.model_dump_json(), media_type="application/json")


@app.get("/api/v1/progress")
async def progress():
    """Progress of the running or last experiment"""
    return get_progress_status()


if __name__ == "__main__":
    import uvicorn

    uvicorn.run(app, host=Config.HOST, port=Config.PORT)
