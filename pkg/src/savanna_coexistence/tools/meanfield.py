"""Mean-field tools: origin stability, interior equilibria, trajectories, phase grids."""

from __future__ import annotations

import asyncio
from typing import Annotated

import numpy as np
from mcp.types import CallToolResult, ToolAnnotations
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..app import mcp
from ..config import OutputFormat
from ..formatters import (
    FORMAT_FIELD_DESC,
    describe_rates,
    handle_error,
    json_out,
    num,
    render_fixed_points,
    render_verdict,
)
from ..meanfield import (
    IntegrationMethod,
    classify_origin,
    integrate_meanfield,
    interior_fixed_points,
    phase_grid,
    survival_condition,
)
from ..models import (
    GSTState,
    MeanFieldResult,
    OriginResult,
    PhaseGridResult,
    RateParams,
    tool_result,
)

RATES_DESC = (
    "Rates {beta, mu, nu, omega}; omega is {kind: 'constant', value} or "
    "{kind: 'step', omega0, omega1, delta0}. Requires mu >= nu."
)


class ClassifyOriginInput(BaseModel):
    """Input for the all-grass stability check."""

    model_config = ConfigDict(extra="forbid")

    rates: RateParams = Field(..., description=RATES_DESC)
    omega_value: float | None = Field(
        default=None,
        ge=0,
        description="Growth rate to linearise with; defaults to the rate at full grass",
    )
    format: OutputFormat = Field(default="markdown", description=FORMAT_FIELD_DESC)


@mcp.tool(
    name="savanna_classify_origin",
    annotations=ToolAnnotations(
        title="All-grass stability and equilibria",
        read_only_hint=True,
        destructive_hint=False,
        idempotent_hint=True,
        open_world_hint=False,
    ),
)
async def savanna_classify_origin(
    params: ClassifyOriginInput,
) -> Annotated[CallToolResult, OriginResult]:
    """Classifies the all-grass state of the mean-field ODE and lists interior equilibria.

    The verdict is the sign of det J = (omega + mu) * nu - beta * omega at the
    origin: negative means unstable (trees invade), positive attracting.

    Returns:
        ``OriginResult`` with verdict, survival condition and fixed points.
    """
    try:
        p = params.rates
        w = p.omega_min if params.omega_value is None else params.omega_value
        model = OriginResult(
            verdict=classify_origin(p, w),
            survival_condition=survival_condition(p, w),
            omega_used=w,
            fixed_points=interior_fixed_points(p),
        )
        if params.format == "json":
            return tool_result(json_out(model.model_dump(mode="json")), model)
        assert model.verdict is not None
        lines = [
            f"## Mean field at {describe_rates(p)}",
            render_verdict(model.verdict, model.survival_condition),
            "",
            "### Interior fixed points",
            render_fixed_points(model.fixed_points),
        ]
        return tool_result("\n".join(lines), model)
    except Exception as e:
        msg = handle_error(e, "origin classification")
        return tool_result(msg, OriginResult(error=msg), is_error=True)


class IntegrateInput(BaseModel):
    """Input for a mean-field trajectory."""

    model_config = ConfigDict(extra="forbid")

    rates: RateParams = Field(..., description=RATES_DESC)
    S: float = Field(default=0.3, ge=0, le=1, description="Initial sapling fraction")
    T: float = Field(default=0.3, ge=0, le=1, description="Initial tree fraction")
    t_end: float = Field(default=200.0, ge=0, le=1e5)
    dt: float = Field(default=0.01, gt=0, le=1.0)
    method: IntegrationMethod = "rk4"
    samples: int = Field(default=20, ge=1, le=1000, description="Number of reported samples")
    format: OutputFormat = Field(default="markdown", description=FORMAT_FIELD_DESC)

    @model_validator(mode="after")
    def _on_simplex(self) -> IntegrateInput:
        if self.S + self.T > 1:
            raise ValueError("S + T must not exceed 1")
        return self


def _integrate(params: IntegrateInput) -> MeanFieldResult:
    p = params.rates
    x0 = GSTState(G=1.0 - params.S - params.T, S=params.S, T=params.T)
    traj = integrate_meanfield(p, x0, params.t_end, params.dt, method=params.method)
    picks = np.unique(np.linspace(0, len(traj) - 1, params.samples + 1).round().astype(int))
    final = traj.final
    roots = interior_fixed_points(p)
    distance = None
    if roots:
        distance = min(
            max(abs(final.S - fp.state.S), abs(final.T - fp.state.T)) for fp in roots
        )
    return MeanFieldResult(
        times=[float(traj.t[i]) for i in picks],
        states=[traj[int(i)] for i in picks],
        final=final,
        distance_to_fixed_point=distance,
    )


@mcp.tool(
    name="savanna_integrate_meanfield",
    annotations=ToolAnnotations(
        title="Mean-field trajectory",
        read_only_hint=True,
        destructive_hint=False,
        idempotent_hint=True,
        open_world_hint=False,
    ),
)
async def savanna_integrate_meanfield(
    params: IntegrateInput,
) -> Annotated[CallToolResult, MeanFieldResult]:
    """Integrates the grass/sapling/tree mean-field ODE with a fixed step.

    Returns:
        ``MeanFieldResult`` with evenly spaced samples, the end state and its
        distance to the nearest interior equilibrium.
    """
    try:
        model = await asyncio.to_thread(_integrate, params)
        if params.format == "json":
            return tool_result(json_out(model.model_dump(mode="json")), model)
        assert model.final is not None
        rows = [
            f"| {num(t, 4)} | {num(s.G)} | {num(s.S)} | {num(s.T)} |"
            for t, s in zip(model.times, model.states, strict=True)
        ]
        lines = [
            f"## Mean-field trajectory ({params.method}, dt={params.dt})",
            "| t | G | S | T |",
            "|---|---|---|---|",
            *rows,
            "",
            f"End state: G={num(model.final.G)}, S={num(model.final.S)}, T={num(model.final.T)}",
        ]
        if model.distance_to_fixed_point is not None:
            distance = num(model.distance_to_fixed_point, 3)
            lines.append(f"Distance to nearest equilibrium: {distance}")
        return tool_result("\n".join(lines), model)
    except Exception as e:
        msg = handle_error(e, "mean-field integration")
        return tool_result(msg, MeanFieldResult(error=msg), is_error=True)


class PhaseGridInput(BaseModel):
    """Input for a beta x mu classification grid."""

    model_config = ConfigDict(extra="forbid")

    beta_min: float = Field(default=0.5, ge=0)
    beta_max: float = Field(default=3.0, ge=0)
    mu_min: float = Field(default=0.5, ge=0)
    mu_max: float = Field(default=3.0, ge=0)
    n: int = Field(default=10, ge=2, le=200, description="Points per axis")
    nu: float = Field(default=0.5, ge=0)
    omega: float = Field(default=1.0, ge=0)
    format: OutputFormat = Field(default="markdown", description=FORMAT_FIELD_DESC)


@mcp.tool(
    name="savanna_phase_grid",
    annotations=ToolAnnotations(
        title="Mean-field phase grid",
        read_only_hint=True,
        destructive_hint=False,
        idempotent_hint=True,
        open_world_hint=False,
    ),
)
async def savanna_phase_grid(
    params: PhaseGridInput,
) -> Annotated[CallToolResult, PhaseGridResult]:
    """Classifies the all-grass state on an evenly spaced beta x mu grid.

    Returns:
        ``PhaseGridResult`` with one row of determinant signs per beta.
    """
    try:
        betas = np.linspace(params.beta_min, params.beta_max, params.n)
        mus = np.linspace(params.mu_min, params.mu_max, params.n)
        signs = phase_grid(betas, mus, params.nu, params.omega)
        model = PhaseGridResult(
            betas=betas.tolist(),
            mus=mus.tolist(),
            signs=signs.astype(int).tolist(),
            unstable_cells=int((signs < 0).sum()),
        )
        if params.format == "json":
            return tool_result(json_out(model.model_dump(mode="json")), model)
        glyph = {-1: "+", 0: "0", 1: "."}
        lines = [
            f"## Phase grid (nu={params.nu}, omega={params.omega})",
            f"{model.unstable_cells} of {signs.size} cells let trees invade "
            "('+' invades, '.' grass attracts, '0' degenerate). Rows: beta, columns: mu.",
            "```",
            *(
                f"{b:8.4g} " + "".join(glyph[int(s)] for s in row)
                for b, row in zip(betas, signs, strict=True)
            ),
            "```",
        ]
        return tool_result("\n".join(lines), model)
    except Exception as e:
        msg = handle_error(e, "phase grid")
        return tool_result(msg, PhaseGridResult(error=msg), is_error=True)
