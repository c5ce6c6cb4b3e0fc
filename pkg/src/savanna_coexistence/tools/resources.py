"""MCP Resource handlers (savanna:// URIs)."""

from __future__ import annotations

import json

from ..app import mcp
from ..config import (
    BOUNDARY_RULES,
    EXPERIMENT_KINDS,
    INITIAL_PATTERNS,
    MODEL_KINDS,
    STREAM_NAMES,
    SWEEPABLE_PARAMS,
)
from ..experiments import ExperimentSpec


@mcp.resource("savanna://schema/experiment")
async def get_experiment_schema() -> str:
    """JSON schema of an experiment TOML file."""
    return json.dumps(ExperimentSpec.model_json_schema(), indent=2, ensure_ascii=False)


@mcp.resource("savanna://vocabulary")
async def get_vocabulary() -> str:
    """Accepted values of the enumerated experiment-file keys."""
    vocabulary = {
        "kind": list(EXPERIMENT_KINDS),
        "model": list(MODEL_KINDS),
        "geometry.boundary": list(BOUNDARY_RULES),
        "initial.pattern": list(INITIAL_PATTERNS),
        "grid.*.name": list(SWEEPABLE_PARAMS),
        "event_streams": list(STREAM_NAMES),
    }
    return json.dumps(vocabulary, indent=2)
