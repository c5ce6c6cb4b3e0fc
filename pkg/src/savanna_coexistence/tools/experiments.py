"""Experiment tools: the diagnostics suite and experiment-file validation."""

from __future__ import annotations

import asyncio
import tomllib
from typing import Annotated

from mcp.types import CallToolResult, ToolAnnotations
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..app import mcp
from ..config import MAX_TOOL_SITES, OutputFormat
from ..diagnostics.report import run_diagnostics
from ..errors import ConfigInvalid
from ..experiments import parse_spec, spec_hash
from ..formatters import FORMAT_FIELD_DESC, handle_error, json_out, render_diagnostics
from ..lattice import Geometry
from ..models import ConfigCheckResult, DiagnosticsReport, RateParams, tool_result
from .meanfield import RATES_DESC


class DiagnosticsInput(BaseModel):
    """Input for one run of the diagnostics suite."""

    model_config = ConfigDict(extra="forbid")

    rates: RateParams = Field(..., description=RATES_DESC)
    geometry: Geometry = Field(
        ..., description="{d, L, kappa, epsilon0, side, boundary}; side >= 4L"
    )
    seed: int = Field(default=0, ge=0, lt=2**64, description="Seed of the random configurations")
    n_configs: int = Field(default=200, ge=1, le=2000, description="Configurations per sweep")
    include_ide: bool = Field(
        default=True, description="Also check the expanding test functions (step omega only)"
    )
    format: OutputFormat = Field(default="markdown", description=FORMAT_FIELD_DESC)

    @model_validator(mode="after")
    def _bounded_lattice(self) -> DiagnosticsInput:
        if self.geometry.n_sites > MAX_TOOL_SITES:
            raise ValueError(
                f"{self.geometry.n_sites} sites exceed the tool limit of {MAX_TOOL_SITES}; "
                "use the batch CLI for larger lattices"
            )
        return self


@mcp.tool(
    name="savanna_diagnostics",
    annotations=ToolAnnotations(
        title="Diagnostics suite",
        read_only_hint=True,
        destructive_hint=False,
        idempotent_hint=True,
        open_world_hint=False,
    ),
)
async def savanna_diagnostics(
    params: DiagnosticsInput,
) -> Annotated[CallToolResult, DiagnosticsReport]:
    """Evaluates the constants ledger and the deterministic assertion sweeps.

    Depending on the rates this runs the survival-side drift checks or the
    extinction-side functional checks, plus the box-chain lumpability check
    and, for a step omega, the test-function derivative check. Random
    configurations are drawn from ``seed`` only, so equal inputs give equal
    reports.

    Returns:
        ``DiagnosticsReport`` with one entry per check.
    """
    try:
        model = await asyncio.to_thread(
            run_diagnostics,
            params.rates,
            params.geometry,
            seed=params.seed,
            n_configs=params.n_configs,
            include_ide=params.include_ide,
        )
        if params.format == "json":
            return tool_result(json_out(model.model_dump(mode="json")), model)
        return tool_result(render_diagnostics(model), model)
    except Exception as e:
        msg = handle_error(e, "diagnostics")
        return tool_result(msg, DiagnosticsReport(error=msg), is_error=True)


class ValidateConfigInput(BaseModel):
    """Input for an experiment-file check."""

    model_config = ConfigDict(extra="forbid")

    toml: str = Field(..., min_length=1, max_length=200_000, description="Experiment file text")
    format: OutputFormat = Field(default="markdown", description=FORMAT_FIELD_DESC)


@mcp.tool(
    name="savanna_validate_config",
    annotations=ToolAnnotations(
        title="Validate experiment file",
        read_only_hint=True,
        destructive_hint=False,
        idempotent_hint=True,
        open_world_hint=False,
    ),
)
async def savanna_validate_config(
    params: ValidateConfigInput,
) -> Annotated[CallToolResult, ConfigCheckResult]:
    """Parses and validates an experiment TOML file without running it.

    An invalid file is a normal answer, not a tool error: the result has
    ``valid=false`` and ``field_path`` names the offending key
    (e.g. ``params.omega.delta0``).

    Returns:
        ``ConfigCheckResult`` with the task count and the config hash when valid.
    """
    try:
        try:
            spec = parse_spec(tomllib.loads(params.toml))
        except tomllib.TOMLDecodeError as e:
            raise ConfigInvalid(f"not valid TOML: {e}") from e
    except ConfigInvalid as e:
        model = ConfigCheckResult(valid=False, field_path=e.field_path, error=str(e))
        if params.format == "json":
            return tool_result(json_out(model.model_dump(mode="json")), model)
        where = f" at `{e.field_path}`" if e.field_path else ""
        return tool_result(f"**Invalid**{where}: {e}", model)
    except Exception as e:
        msg = handle_error(e, "config validation")
        return tool_result(msg, ConfigCheckResult(error=msg), is_error=True)

    model = ConfigCheckResult(
        valid=True,
        kind=spec.kind,
        tasks=len(spec.grid) * spec.replicas,
        config_hash=spec_hash(spec),
    )
    if params.format == "json":
        return tool_result(json_out(model.model_dump(mode="json")), model)
    text = "\n".join(
        [
            f"**Valid** `{spec.kind}` experiment ({spec.model} model)",
            f"- tasks: {model.tasks} ({len(spec.grid)} grid points x {spec.replicas} replicas)",
            f"- horizons: {', '.join(f'{h:g}' for h in spec.checkpoints)}",
            f"- config hash: `{model.config_hash}`",
        ]
    )
    return tool_result(text, model)
