"""Long-range limit tools: expanding test functions and front propagation."""

from __future__ import annotations

import asyncio
from typing import Annotated

from mcp.types import CallToolResult, ToolAnnotations
from pydantic import BaseModel, ConfigDict, Field

from ..app import mcp
from ..config import OutputFormat
from ..formatters import (
    FORMAT_FIELD_DESC,
    handle_error,
    json_out,
    num,
    render_constants,
    render_lemma81,
)
from ..ide import (
    build_test_functions,
    default_test_h,
    find_dtt_crossing,
    front_metrics,
    make_grid,
    solve_ide,
    theorem3_constants,
    verify_lemma81,
)
from ..models import FrontResult, ProfileCheckResult, RateParams, tool_result
from .meanfield import RATES_DESC


class ProfileCheckInput(BaseModel):
    """Input for the expanding test-function check."""

    model_config = ConfigDict(extra="forbid")

    rates: RateParams = Field(..., description=RATES_DESC + " Needs a step omega.")
    kappa: float = Field(default=1.0, gt=0, description="Grass window in units of L")
    d: int = Field(default=1, ge=1, le=2)
    h: float | None = Field(
        default=None, gt=0, description="Grid spacing; default eps81/128 (1-D) or eps81/8"
    )
    crossing: bool = Field(
        default=False, description="Also bisect for the nu at which dT/dt turns negative"
    )
    format: OutputFormat = Field(default="markdown", description=FORMAT_FIELD_DESC)


def _test_functions(params: ProfileCheckInput) -> ProfileCheckResult:
    p = params.rates
    c = theorem3_constants(p, params.kappa, params.d)
    f = build_test_functions(c, params.h if params.h is not None else default_test_h(c))
    report = verify_lemma81(f, c, p)
    crossing = find_dtt_crossing(f, c, p) if params.crossing else None
    return ProfileCheckResult(constants=c, report=report, nu_crossing=crossing)


@mcp.tool(
    name="savanna_test_functions",
    annotations=ToolAnnotations(
        title="Expanding test functions",
        read_only_hint=True,
        destructive_hint=False,
        idempotent_hint=True,
        open_world_hint=False,
    ),
)
async def savanna_test_functions(
    params: ProfileCheckInput,
) -> Annotated[CallToolResult, ProfileCheckResult]:
    """Builds the plateau test functions and checks their initial growth.

    Both profiles must grow at rate at least 4 * eps1 on their supports at
    t = 0 for the integro-differential equation to spread.

    Returns:
        ``ProfileCheckResult`` with the constants, the verdict and optionally
        the critical tree death rate.
    """
    try:
        model = await asyncio.to_thread(_test_functions, params)
        if params.format == "json":
            return tool_result(json_out(model.model_dump(mode="json")), model)
        assert model.constants is not None and model.report is not None
        table = model.constants.model_dump(exclude={"ledger", "d", "kappa"})
        text = "\n\n".join(
            [
                render_lemma81(model.report, model.nu_crossing),
                render_constants(table, "Plateau constants"),
            ]
        )
        return tool_result(text, model)
    except Exception as e:
        msg = handle_error(e, "test functions")
        return tool_result(msg, ProfileCheckResult(error=msg), is_error=True)


class FrontInput(BaseModel):
    """Input for a one-dimensional front run."""

    model_config = ConfigDict(extra="forbid")

    rates: RateParams = Field(..., description=RATES_DESC)
    kappa: float = Field(default=1.0, gt=0)
    half_width: float = Field(default=10.0, gt=0, le=200)
    h: float = Field(default=0.1, ge=0.005, le=1.0)
    t_end: float = Field(default=10.0, gt=0, le=500)
    level: float = Field(default=0.25, gt=0, lt=1, description="Tree density marking the front")
    front_height: float = Field(default=0.5, gt=0, le=1)
    front_radius: float = Field(default=1.0, gt=0)
    format: OutputFormat = Field(default="markdown", description=FORMAT_FIELD_DESC)


def _front(params: FrontInput) -> FrontResult:
    f0 = make_grid(params.half_width, params.h, 1)
    f0.T[f0.radius() <= params.front_radius] = params.front_height
    traj = solve_ide(
        f0, params.rates, params.t_end, kappa=params.kappa, sample_every=params.t_end / 20
    )
    fm = front_metrics(traj, params.level)
    return FrontResult(
        times=fm.times,
        radii=fm.radii,
        speed=fm.slope,
        tree_mass=float(traj.final.T.sum()) * params.h,
    )


@mcp.tool(
    name="savanna_ide_front",
    annotations=ToolAnnotations(
        title="IDE front propagation",
        read_only_hint=True,
        destructive_hint=False,
        idempotent_hint=True,
        open_world_hint=False,
    ),
)
async def savanna_ide_front(params: FrontInput) -> Annotated[CallToolResult, FrontResult]:
    """Solves the one-dimensional integro-differential equation from a tree patch.

    Returns:
        ``FrontResult`` with the front radius per sample and the fitted speed.
    """
    try:
        model = await asyncio.to_thread(_front, params)
        if params.format == "json":
            return tool_result(json_out(model.model_dump(mode="json")), model)
        lines = [
            f"## Front of T > {params.level}",
            f"Fitted speed: {num(model.speed, 4)} per unit time; "
            f"tree mass {num(model.tree_mass, 4)}",
            "",
            "| t | radius |",
            "|---|---|",
            *(
                f"| {num(t, 4)} | {num(r, 4)} |"
                for t, r in zip(model.times, model.radii, strict=True)
            ),
        ]
        return tool_result("\n".join(lines), model)
    except Exception as e:
        msg = handle_error(e, "IDE front")
        return tool_result(msg, FrontResult(error=msg), is_error=True)
