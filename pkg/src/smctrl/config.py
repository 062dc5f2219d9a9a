"""Configuration defaults for smctrl runs.

Everything is explicit: there are no environment overrides. Command-line flags
and JSON documents take precedence over the values below.
"""

import hashlib
import json
from pathlib import Path
from typing import Any, Dict

PACKAGE_DIR = Path(__file__).parent

# General run configuration
RUN_CONFIG: Dict[str, Any] = {
    "workers": 4,  # threads used for path batches
    "chunk_size": 2000,  # paths per worker task
    "progress": False,  # tqdm bars in library calls
    "picard_tol": 1e-10,  # weighted sup-norm stopping distance
    "picard_max_iter": 200,
    "picard_beta_factor": 4.0,  # beta = factor * contraction constant when not given
    "quad_tol": 1e-10,  # absolute tolerance of the quadrature fallback
    "quad_limit": 200,  # subdivisions allowed per piece
    "scheme_budget": 5.0,  # backward/Picard agreement budget, in units of dt
    "lipschitz_samples": 64,
}

# Tolerances used by verify-example and the acceptance suite
VERIFY_CONFIG: Dict[str, float] = {
    "value_tol": 1e-2,  # |v(0,x1,0) - y0(0)|
    "mc_sigmas": 3.0,
    "mc_slack": 1e-2,
}


def get_data_dir() -> Path:
    """Directory holding the packaged example documents."""
    return PACKAGE_DIR / "data"


def example_model_path() -> Path:
    return get_data_dir() / "example_model.json"


def example_problem_path() -> Path:
    return get_data_dir() / "example_problem.json"


def config_hash(payload: Dict[str, Any]) -> str:
    """sha256 of the canonical JSON form of a run configuration."""
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
