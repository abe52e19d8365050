import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional, Union

from dotenv import load_dotenv
from pydantic import ValidationError

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from app.models import ExperimentConfig
from app.utils.errors import ConfigInvalid

# Load environment variables
load_dotenv()

logger = logging.getLogger(__name__)


class Config:
    """Environment settings for the disbayes harness"""

    # Harness Configuration
    OUTPUT_DIR = os.getenv("DISBAYES_OUTPUT_DIR", "results")
    WORKERS = int(os.getenv("DISBAYES_WORKERS", 1))
    LOG_LEVEL = os.getenv("DISBAYES_LOG_LEVEL", "INFO").upper()
    PROGRESS_INTERVAL = float(os.getenv("DISBAYES_PROGRESS_INTERVAL", 30))

    # Numerical Configuration
    GRID_RESOLUTION = int(os.getenv("DISBAYES_GRID_RESOLUTION", 200))
    QUAD_POINTS = int(os.getenv("DISBAYES_QUAD_POINTS", 2048))

    # Server Configuration
    PORT = int(os.getenv("PORT", 3001))
    HOST = os.getenv("HOST", "127.0.0.1")

    # CORS Configuration
    ALLOW_ORIGINS = ["*"]
    ALLOW_CREDENTIALS = True
    ALLOW_METHODS = ["*"]
    ALLOW_HEADERS = ["*"]

    # Environment Configuration
    ENVIRONMENT = os.getenv("ENVIRONMENT", "development")
    DEBUG = ENVIRONMENT == "development"

    @classmethod
    def validate(cls):
        """Warn about settings the harness will clamp or ignore"""
        if cls.WORKERS < 1:
            logger.warning("⚠️  DISBAYES_WORKERS=%d is below 1, running single-threaded", cls.WORKERS)
        if cls.GRID_RESOLUTION < 3:
            logger.warning("⚠️  DISBAYES_GRID_RESOLUTION=%d is too coarse for grid beliefs", cls.GRID_RESOLUTION)
        if cls.QUAD_POINTS < 257:
            logger.warning("⚠️  DISBAYES_QUAD_POINTS=%d may leave BvM tail mass above 1e-6", cls.QUAD_POINTS)
        if cls.LOG_LEVEL not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            logger.warning("⚠️  Unknown DISBAYES_LOG_LEVEL '%s', using INFO", cls.LOG_LEVEL)
        return True


def _field_errors(error: ValidationError):
    messages = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"])
        messages.append(f"{location}: {item['msg']}" if location else item["msg"])
    return messages


def parse_experiment_config(data: Dict[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        fields = _field_errors(e)
        raise ConfigInvalid(f"invalid experiment configuration ({len(fields)} problem(s))", fields) from e


def load_experiment_config(
    path: Union[str, Path],
    seed: Optional[int] = None,
    out: Optional[str] = None,
    workers: Optional[int] = None,
) -> ExperimentConfig:
    """Read a TOML experiment file; command-line values override the file"""
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except FileNotFoundError as e:
        raise ConfigInvalid(f"config file not found: {path}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigInvalid(f"config file {path} is not valid TOML: {e}") from e

    run = data.setdefault("run", {})
    output = data.setdefault("output", {})
    if seed is not None:
        run["seed"] = seed
    if workers is not None:
        run["workers"] = workers
    if out is not None:
        output["directory"] = out
    run.setdefault("workers", max(Config.WORKERS, 1))
    output.setdefault("directory", Config.OUTPUT_DIR)
    return parse_experiment_config(data)
