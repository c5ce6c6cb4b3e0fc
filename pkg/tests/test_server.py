"""Tests for the MCP tools: registration, structured output and error payloads."""

from __future__ import annotations

import json
import math

import pytest
from factories import rates

import savanna_coexistence.server as server_module
from savanna_coexistence.app import mcp
from savanna_coexistence.lattice import Geometry
from savanna_coexistence.tools.constants import (
    ExtinctionConstantsInput,
    RecoveryConstantsInput,
    savanna_extinction_constants,
    savanna_recovery_constants,
)
from savanna_coexistence.tools.experiments import (
    DiagnosticsInput,
    ValidateConfigInput,
    savanna_diagnostics,
    savanna_validate_config,
)
from savanna_coexistence.tools.ide import (
    FrontInput,
    ProfileCheckInput,
    savanna_ide_front,
    savanna_test_functions,
)
from savanna_coexistence.tools.meanfield import (
    ClassifyOriginInput,
    IntegrateInput,
    PhaseGridInput,
    savanna_classify_origin,
    savanna_integrate_meanfield,
    savanna_phase_grid,
)

TOOLS = {
    "savanna_classify_origin",
    "savanna_integrate_meanfield",
    "savanna_phase_grid",
    "savanna_recovery_constants",
    "savanna_extinction_constants",
    "savanna_diagnostics",
    "savanna_validate_config",
    "savanna_test_functions",
    "savanna_ide_front",
}

VALID_TOML = """
kind = "phase_sweep"
replicas = 4
horizons = [5.0, 10.0]

[params]
beta = 2.0
mu = 0.5
nu = 0.5
[params.omega]
kind = "constant"
value = 1.0

[geometry]
L = 2
side = 16

[grid.x]
name = "beta"
values = [1.0, 2.0, 3.0]
"""

# ─── Registration ─────────────────────────────────────────────────────────────


def test_server_module_exposes_mcp_instance():
    assert server_module.mcp is mcp
    assert mcp.name == "savanna_coexistence"


def test_registered_tools():
    tools = {t.name: t for t in mcp._tool_manager.list_tools()}
    assert set(tools) == TOOLS
    for name, tool in tools.items():
        assert tool.annotations.read_only_hint is True, name
        assert tool.annotations.idempotent_hint is True, name
        assert tool.annotations.open_world_hint is False, name
        assert tool.output_schema is not None, f"{name} has no output schema"
        assert "error" in tool.output_schema.get("properties", {}), name


async def test_call_through_server_validates_output():
    """MCPServer.call_tool builds the context and checks structuredContent."""
    out = await mcp.call_tool("savanna_validate_config", {"params": {"toml": VALID_TOML}})
    assert out.structured_content["valid"] is True
    assert out.structured_content["tasks"] == 12
    assert out.content[0].text.startswith("**Valid**")


# ─── Mean field ───────────────────────────────────────────────────────────────


async def test_classify_origin_unstable(survival_rates):
    result = await savanna_classify_origin(ClassifyOriginInput(rates=survival_rates))
    data = result.structured_content
    assert not result.is_error
    assert data["verdict"]["kind"] == "Unstable"
    # (omega + mu) nu - beta omega = 1.5 * 0.5 - 2
    assert data["verdict"]["determinant"] == pytest.approx(-1.25)
    assert data["survival_condition"] is True
    assert data["fixed_points"]
    assert all(fp["residual"] < 1e-10 for fp in data["fixed_points"])
    assert "Unstable" in result.content[0].text


async def test_classify_origin_attracting(extinction_rates):
    result = await savanna_classify_origin(
        ClassifyOriginInput(rates=extinction_rates, format="json")
    )
    data = json.loads(result.content[0].text)
    assert data["verdict"]["kind"] == "Attracting"
    assert data["survival_condition"] is False
    assert data == result.structured_content


async def test_classify_origin_uses_override(plateau_rates):
    low = await savanna_classify_origin(ClassifyOriginInput(rates=plateau_rates))
    high = await savanna_classify_origin(
        ClassifyOriginInput(rates=plateau_rates, omega_value=1.0)
    )
    assert low.structured_content["omega_used"] == 0.2
    assert high.structured_content["omega_used"] == 1.0


async def test_integrate_reaches_equilibrium(survival_rates):
    result = await savanna_integrate_meanfield(
        IntegrateInput(rates=survival_rates, t_end=200.0, dt=0.01, samples=10)
    )
    data = result.structured_content
    assert not result.is_error
    assert data["times"][0] == 0.0
    assert data["times"][-1] == pytest.approx(200.0)
    assert data["distance_to_fixed_point"] < 1e-6
    final = data["final"]
    assert final["G"] + final["S"] + final["T"] == pytest.approx(1.0)


async def test_integrate_off_simplex_is_rejected(survival_rates):
    with pytest.raises(ValueError):
        IntegrateInput(rates=survival_rates, S=0.7, T=0.7)


async def test_integrate_step_too_large_is_a_tool_error():
    params = IntegrateInput(
        rates=rates(50.0, 40.0, 1.0, 30.0), S=0.3, T=0.3, dt=1.0, t_end=10.0, method="euler"
    )
    result = await savanna_integrate_meanfield(params)
    assert result.is_error
    assert result.structured_content["error"]
    assert result.structured_content["states"] == []


async def test_phase_grid_signs():
    result = await savanna_phase_grid(
        PhaseGridInput(beta_min=0.5, beta_max=3.0, mu_min=0.5, mu_max=3.0, n=3)
    )
    data = result.structured_content
    # det = (1 + mu) / 2 - beta with nu = 0.5, omega = 1
    assert data["signs"] == [[1, 1, 1], [-1, -1, 1], [-1, -1, -1]]
    assert data["unstable_cells"] == 5
    assert "5 of 9 cells" in result.content[0].text


# ─── Constants ────────────────────────────────────────────────────────────────


async def test_recovery_constants(survival_rates):
    result = await savanna_recovery_constants(
        RecoveryConstantsInput(rates=survival_rates, L=100)
    )
    data = result.structured_content
    assert not result.is_error
    assert data["constants"]["theta"] == pytest.approx(2.75)
    assert data["constants"]["a0"] == pytest.approx(0.05)
    assert data["lam"] == pytest.approx(0.05 / 200)
    assert data["invariant_failures"] == []
    assert "lambda(L=100)" in result.content[0].text


async def test_recovery_constants_outside_survival(extinction_rates):
    result = await savanna_recovery_constants(RecoveryConstantsInput(rates=extinction_rates))
    assert result.is_error
    assert result.structured_content["constants"] is None
    assert "no admissible constants" in result.structured_content["error"]


async def test_extinction_constants(extinction_rates):
    result = await savanna_extinction_constants(
        ExtinctionConstantsInput(rates=extinction_rates, L=2)
    )
    data = result.structured_content
    assert data["theta_prime"] == pytest.approx(1.85)
    assert data["max_lambda_prime"] == pytest.approx(math.log(1.85 / 1.2) / 2)
    assert data["coeff_sapling"] == pytest.approx(0.85 - 1.5)


async def test_extinction_constants_without_births():
    result = await savanna_extinction_constants(
        ExtinctionConstantsInput(rates=rates(0.0, 1.0, 1.0, 1.0))
    )
    assert not result.is_error
    assert result.structured_content["max_lambda_prime"] is None


# ─── Test functions and fronts ────────────────────────────────────────────────


async def test_test_functions_pass_on_plateau_rates(plateau_rates):
    result = await savanna_test_functions(ProfileCheckInput(rates=plateau_rates, crossing=True))
    data = result.structured_content
    assert not result.is_error
    assert data["report"]["passed"] is True
    assert data["constants"]["eps81"] > 0
    assert 0.5 < data["nu_crossing"]
    assert "PASS" in result.content[0].text


async def test_test_functions_need_step_rates(survival_rates):
    result = await savanna_test_functions(ProfileCheckInput(rates=survival_rates))
    assert result.is_error
    assert "required hypothesis" in result.structured_content["error"]
    assert result.structured_content["report"] is None


async def test_ide_front_spreads(plateau_rates):
    result = await savanna_ide_front(
        FrontInput(rates=plateau_rates, half_width=5.0, h=0.1, t_end=2.0)
    )
    data = result.structured_content
    assert not result.is_error
    assert data["times"] == sorted(data["times"])
    assert len(data["radii"]) == len(data["times"])
    assert data["radii"][-1] >= data["radii"][0]
    assert data["tree_mass"] > 0


# ─── Experiments ──────────────────────────────────────────────────────────────


async def test_diagnostics_is_reproducible(extinction_rates):
    params = DiagnosticsInput(
        rates=extinction_rates, geometry=Geometry(d=1, L=2, side=16), seed=5, n_configs=20
    )
    first = await savanna_diagnostics(params)
    second = await savanna_diagnostics(params)
    assert not first.is_error
    assert first.structured_content == second.structured_content
    checks = first.structured_content["checks"]
    assert checks
    assert all(c["passed"] for c in checks), checks
    assert first.structured_content["constants"]["theta_prime"] == pytest.approx(1.85)


def test_diagnostics_rejects_oversized_lattices(extinction_rates):
    with pytest.raises(ValueError, match="tool limit"):
        DiagnosticsInput(rates=extinction_rates, geometry=Geometry(d=3, L=2, side=128))


async def test_validate_config_valid():
    result = await savanna_validate_config(ValidateConfigInput(toml=VALID_TOML, format="json"))
    data = result.structured_content
    assert data["valid"] is True
    assert data["kind"] == "phase_sweep"
    assert len(data["config_hash"]) == 64
    assert data["field_path"] is None


@pytest.mark.parametrize(
    "toml, path",
    [
        (VALID_TOML.replace("replicas = 4", "replicas = 0"), "replicas"),
        (VALID_TOML.replace('value = 1.0\n', 'value = -1.0\n'), "params.omega.value"),
        (VALID_TOML.replace('name = "beta"', 'name = "gamma"'), "grid.x.name"),
        ("kind = [", ""),
    ],
)
async def test_validate_config_invalid(toml, path):
    """An invalid file is an answer, not a tool error."""
    result = await savanna_validate_config(ValidateConfigInput(toml=toml))
    data = result.structured_content
    assert not result.is_error
    assert data["valid"] is False
    assert data["field_path"] == path
    assert data["error"]
    assert result.content[0].text.startswith("**Invalid**")
