"""Constants tools: survival recovery constants and extinction weights."""

from __future__ import annotations

import math
from typing import Annotated

from mcp.types import CallToolResult, ToolAnnotations
from pydantic import BaseModel, ConfigDict, Field

from ..app import mcp
from ..config import DEFAULT_A0, OutputFormat
from ..diagnostics.extinction import max_lambda_prime, theta_prime
from ..diagnostics.recovery import recovery_constants, recovery_invariants
from ..formatters import FORMAT_FIELD_DESC, handle_error, json_out, num, render_constants
from ..models import ExtinctionConstantsResult, RateParams, RecoveryConstantsResult, tool_result
from .meanfield import RATES_DESC


class RecoveryConstantsInput(BaseModel):
    """Input for the survival-side constants."""

    model_config = ConfigDict(extra="forbid")

    rates: RateParams = Field(..., description=RATES_DESC)
    d: int = Field(default=1, ge=1, le=3, description="Lattice dimension")
    L: int = Field(default=50, ge=1, description="Interaction range for lambda(L)")
    a0_init: float = Field(default=DEFAULT_A0, gt=0, lt=0.25)
    alpha: float | None = Field(default=None, description="In (d/2, d); default 0.75 d")
    format: OutputFormat = Field(default="markdown", description=FORMAT_FIELD_DESC)


@mcp.tool(
    name="savanna_recovery_constants",
    annotations=ToolAnnotations(
        title="Recovery constants",
        read_only_hint=True,
        destructive_hint=False,
        idempotent_hint=True,
        open_world_hint=False,
    ),
)
async def savanna_recovery_constants(
    params: RecoveryConstantsInput,
) -> Annotated[CallToolResult, RecoveryConstantsResult]:
    """Computes theta, a0, rho, eps0, t0 for the truncated process in the survival regime.

    theta is the midpoint of ((mu+omega)/omega, beta/nu); a0 is halved from
    ``a0_init`` until the drift margin rho is positive.

    Returns:
        ``RecoveryConstantsResult``; ``error`` explains an empty theta interval.
    """
    try:
        p = params.rates
        rc = recovery_constants(p, params.d, params.a0_init, alpha=params.alpha)
        model = RecoveryConstantsResult(
            constants=rc,
            lam=rc.lam(params.L),
            drift_bound=rc.drift_bound(p, params.L),
            invariant_failures=recovery_invariants(rc, p),
        )
        if params.format == "json":
            return tool_result(json_out(model.model_dump(mode="json")), model)
        table = rc.model_dump()
        table[f"lambda(L={params.L})"] = rc.lam(params.L)
        table["t0 log L"] = rc.t0 * math.log(params.L) if params.L > 1 else 0.0
        text = render_constants(table, "Recovery constants")
        if model.invariant_failures:
            text += "\n\nViolated: " + "; ".join(model.invariant_failures)
        return tool_result(text, model)
    except Exception as e:
        msg = handle_error(e, "recovery constants")
        return tool_result(msg, RecoveryConstantsResult(error=msg), is_error=True)


class ExtinctionConstantsInput(BaseModel):
    """Input for the extinction-side weights."""

    model_config = ConfigDict(extra="forbid")

    rates: RateParams = Field(..., description=RATES_DESC)
    L: int = Field(default=2, ge=1, description="Interaction range")
    format: OutputFormat = Field(default="markdown", description=FORMAT_FIELD_DESC)


@mcp.tool(
    name="savanna_extinction_constants",
    annotations=ToolAnnotations(
        title="Extinction weights",
        read_only_hint=True,
        destructive_hint=False,
        idempotent_hint=True,
        open_world_hint=False,
    ),
)
async def savanna_extinction_constants(
    params: ExtinctionConstantsInput,
) -> Annotated[CallToolResult, ExtinctionConstantsResult]:
    """Computes theta' and the steepest admissible exponential weight lambda'.

    theta' is the midpoint of [beta/nu, (mu+omega)/omega]; lambda' is the
    largest weight with beta * exp(lambda' L) <= theta' nu.

    Returns:
        ``ExtinctionConstantsResult``; ``max_lambda_prime`` is null when no
        tree births exist and any weight works.
    """
    try:
        p = params.rates
        tp = theta_prime(p)
        lam = max_lambda_prime(p, params.L)
        model = ExtinctionConstantsResult(
            theta_prime=tp,
            max_lambda_prime=lam if math.isfinite(lam) else None,
            coeff_sapling=(tp - 1) * p.omega_min - p.mu,
        )
        if params.format == "json":
            return tool_result(json_out(model.model_dump(mode="json")), model)
        lines = [
            "## Extinction weights",
            f"- theta' = {num(tp)}",
            f"- largest lambda' at L={params.L}: {num(model.max_lambda_prime)}",
            f"- sapling coefficient (theta'-1)omega - mu = {num(model.coeff_sapling)}",
        ]
        if p.beta / p.nu > (p.mu + p.omega_min) / p.omega_min:
            lines.append("- the interval for theta' is empty: these rates are not subcritical")
        return tool_result("\n".join(lines), model)
    except Exception as e:
        msg = handle_error(e, "extinction constants")
        return tool_result(msg, ExtinctionConstantsResult(error=msg), is_error=True)
