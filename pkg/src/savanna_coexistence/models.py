"""Parameter and result models.

Rate parameters, constants ledgers and reports are pydantic models so the same
objects validate a TOML experiment file, travel as MCP ``structuredContent``
and land in result manifests without a second serialisation layer. Numeric
state (lattices, fields, trajectories) stays in numpy containers defined next
to the code that mutates it.

Result models carry permissive defaults plus an ``error`` field where a tool
returns them, so the error path still emits a schema-valid payload.
"""

from __future__ import annotations

from fractions import Fraction
from math import exp, factorial
from typing import Annotated, Any, Literal

import numpy as np
from mcp.types import CallToolResult, TextContent
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .config import SIMPLEX_TOL

_FROZEN = ConfigDict(extra="forbid", frozen=True)


# ─── Rates ────────────────────────────────────────────────────────────────────


class ConstantOmega(BaseModel):
    """Sapling growth at a fixed rate, independent of the grass fraction."""

    model_config = _FROZEN

    kind: Literal["constant"] = "constant"
    value: float = Field(..., ge=0, description="Growth rate 1 -> 2")


class StepOmega(BaseModel):
    """Fire-suppressed growth: omega0 while grass is below 1 - delta0, omega1 from there on."""

    model_config = _FROZEN

    kind: Literal["step"] = "step"
    omega0: float = Field(..., ge=0, description="Growth rate when grass is scarce")
    omega1: float = Field(..., ge=0, description="Growth rate once grass fraction >= 1 - delta0")
    delta0: float = Field(..., gt=0, lt=1)

    @model_validator(mode="after")
    def _ordered(self) -> StepOmega:
        if not self.omega0 > self.omega1:
            raise ValueError(f"omega0 ({self.omega0}) must exceed omega1 ({self.omega1})")
        return self


OmegaSpec = Annotated[ConstantOmega | StepOmega, Field(discriminator="kind")]


class RateParams(BaseModel):
    """Transition rates of the grass (0) / sapling (1) / tree (2) models.

    Zero rates are accepted so degenerate chains (pure death, no branching)
    can be built; ``mu >= nu`` is the standing assumption of the coupling.
    """

    model_config = _FROZEN

    beta: float = Field(..., ge=0, description="Birth rate of saplings from trees")
    mu: float = Field(..., ge=0, description="Sapling death rate")
    nu: float = Field(..., ge=0, description="Tree death rate")
    omega: OmegaSpec

    @model_validator(mode="after")
    def _mu_dominates_nu(self) -> RateParams:
        if self.mu < self.nu:
            raise ValueError(f"mu ({self.mu}) must be >= nu ({self.nu})")
        return self

    @property
    def omega_min(self) -> float:
        if isinstance(self.omega, StepOmega):
            return self.omega.omega1
        return self.omega.value

    @property
    def omega_max(self) -> float:
        if isinstance(self.omega, StepOmega):
            return self.omega.omega0
        return self.omega.value

    def omega_of(self, grass: Any) -> Any:
        """Growth rate at grass fraction ``grass`` (scalar or array), right-continuous."""
        if isinstance(self.omega, ConstantOmega):
            if np.ndim(grass) == 0:
                return self.omega.value
            return np.full(np.shape(grass), self.omega.value)
        threshold = 1.0 - self.omega.delta0
        if np.ndim(grass) == 0:
            return self.omega.omega0 if grass < threshold else self.omega.omega1
        return np.where(np.asarray(grass) < threshold, self.omega.omega0, self.omega.omega1)

    def with_value(self, name: str, value: float) -> RateParams:
        """Copy with one named rate replaced; ``omega*``/``delta0`` reach into the spec."""
        if name in ("beta", "mu", "nu"):
            return RateParams.model_validate({**self.model_dump(), name: value})
        omega = self.omega.model_dump()
        if name == "omega":
            if omega["kind"] != "constant":
                raise ValueError("'omega' can only be swept for a constant growth rate")
            omega["value"] = value
        elif name in ("omega0", "omega1", "delta0"):
            if omega["kind"] != "step":
                raise ValueError(f"'{name}' can only be swept for a step growth rate")
            omega[name] = value
        else:
            raise ValueError(f"unknown rate parameter '{name}'")
        return RateParams.model_validate({**self.model_dump(), "omega": omega})


def exact(value: float) -> Fraction:
    """The float as the rational it exactly is."""
    return Fraction(value)


# ─── Mean field ───────────────────────────────────────────────────────────────


class GSTState(BaseModel):
    """Grass, sapling and tree fractions of a well-mixed population."""

    model_config = _FROZEN

    G: float
    S: float
    T: float

    @model_validator(mode="after")
    def _on_simplex(self) -> GSTState:
        if min(self.G, self.S, self.T) < -SIMPLEX_TOL:
            raise ValueError(f"negative fraction in {self!r}")
        if abs(self.G + self.S + self.T - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"fractions sum to {self.G + self.S + self.T}, not 1")
        return self


class StabilityVerdict(BaseModel):
    """Linear stability of the all-grass state."""

    model_config = _FROZEN

    kind: Literal["Unstable", "Attracting", "Degenerate"]
    determinant: float
    trace: float


class FixedPoint(BaseModel):
    """An interior equilibrium together with the growth regime it lives in."""

    model_config = _FROZEN

    state: GSTState
    regime: Literal["constant", "omega0", "omega1"]
    residual: float = Field(description="Largest |right-hand side| at the point")


# ─── Constants ledgers ────────────────────────────────────────────────────────


class RecoveryConstants(BaseModel):
    """Weights and rates driving the recovery drift of the truncated process."""

    model_config = _FROZEN

    theta: float
    a0: float
    rho: float
    eps0: float
    t0: float
    alpha: float
    d: int
    halvings: int = Field(default=0, description="How often a0 was halved from its start value")

    def lam(self, L: int) -> float:
        """Exponential weight scale for interaction range ``L``."""
        return self.a0 / (2 * L)

    def drift_bound(self, p: RateParams, L: int) -> float:
        """A-priori bound on |mu(xi)| over all configurations at range ``L``."""
        u = sup_norm_integral_bound(self.d, self.lam(L))
        return self.theta * (p.beta + p.omega_max + p.mu + p.nu) * u


def sup_norm_integral_bound(d: int, lam: float) -> float:
    """``e^{lam/2} * 2^d * d!``: the integral of e^{-|z|_inf} times the lattice slack."""
    return exp(lam / 2) * 2**d * factorial(d)


class ExtendedLedger(BaseModel):
    """Constants of the block iteration, computed for reporting only."""

    model_config = _FROZEN

    eps_pim1: float
    eps_pim2: float
    eps_pim3: float
    eps_pim: float
    delta_pur1: float
    delta_pur: float
    c_lip: float
    eps_box: float
    t_exre: float
    c_exre: float
    m: float
    R: float


class Theorem3Constants(BaseModel):
    """Plateau heights, ramp width and drift margin of the expanding test functions."""

    model_config = _FROZEN

    Sigma0: float
    gamma0: float
    T0: float
    S0: float
    M: float
    eps81: float
    eps1: float
    epsT1: float
    epsT2: float
    d: int
    kappa: float
    ledger: ExtendedLedger | None = None


# ─── Reports ──────────────────────────────────────────────────────────────────


class CheckResult(BaseModel):
    """One pass/fail line of a diagnostics report."""

    name: str
    passed: bool
    detail: str = ""
    statistics: dict[str, float] = Field(default_factory=dict)


class Lemma81Report(BaseModel):
    """Derivative positivity of the test functions at t = 0."""

    min_deriv_S: float = 0.0
    min_deriv_T: float = 0.0
    threshold: float = 0.0
    tolerance: float = 0.0
    omega_saturated: bool = False
    passed: bool = False
    conclusive: bool = Field(
        default=False, description="Grid tolerance below the 4 eps1 margin being checked"
    )
    h: float = 0.0
    nodes_S: int = 0
    nodes_T: int = 0
    error: str | None = None


class DiagnosticsReport(BaseModel):
    """Constants ledger, per-check verdicts and sample statistics of one suite run."""

    params: RateParams | None = None
    constants: dict[str, float] = Field(default_factory=dict)
    checks: list[CheckResult] = Field(default_factory=list)
    error: str | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, check: CheckResult) -> CheckResult:
        self.checks.append(check)
        return check


# ─── Experiment records ───────────────────────────────────────────────────────

Scalar = bool | int | float | str | None


class ResultRecord(BaseModel):
    """Scalar outputs of one (grid point, replica) task.

    Everything except ``wall_time`` is a function of the experiment file and
    the master seed.
    """

    model_config = ConfigDict(extra="forbid")

    experiment_id: str
    kind: str
    grid_index: int = Field(..., ge=0)
    replica: int = Field(..., ge=0)
    seed: int = Field(..., ge=0)
    point: dict[str, float] = Field(default_factory=dict)
    outputs: dict[str, Scalar] = Field(default_factory=dict)
    wall_time: float = 0.0

    def scalars(self) -> dict[str, Any]:
        return self.model_dump(exclude={"wall_time"})


# ─── Tool results ─────────────────────────────────────────────────────────────


class OriginResult(BaseModel):
    """Stability of the all-grass state plus the interior equilibria."""

    verdict: StabilityVerdict | None = None
    survival_condition: bool = False
    omega_used: float = 0.0
    fixed_points: list[FixedPoint] = Field(default_factory=list)
    error: str | None = None


class MeanFieldResult(BaseModel):
    """Sampled mean-field trajectory."""

    times: list[float] = Field(default_factory=list)
    states: list[GSTState] = Field(default_factory=list)
    final: GSTState | None = None
    distance_to_fixed_point: float | None = Field(
        default=None, description="Sup distance of the end state to the nearest interior root"
    )
    error: str | None = None


class PhaseGridResult(BaseModel):
    """Determinant-sign classification over a beta x mu grid."""

    betas: list[float] = Field(default_factory=list)
    mus: list[float] = Field(default_factory=list)
    signs: list[list[int]] = Field(
        default_factory=list, description="Row per beta: -1 unstable, +1 attracting, 0 degenerate"
    )
    unstable_cells: int = 0
    error: str | None = None


class RecoveryConstantsResult(BaseModel):
    constants: RecoveryConstants | None = None
    lam: float | None = Field(default=None, description="Weight scale a0/(2L) at the given L")
    drift_bound: float | None = None
    invariant_failures: list[str] = Field(default_factory=list)
    error: str | None = None


class ExtinctionConstantsResult(BaseModel):
    theta_prime: float | None = None
    max_lambda_prime: float | None = Field(
        default=None, description="Largest weight with beta*exp(lambda' L) <= theta' nu"
    )
    coeff_sapling: float | None = None
    error: str | None = None


class ProfileCheckResult(BaseModel):
    constants: Theorem3Constants | None = None
    report: Lemma81Report | None = None
    nu_crossing: float | None = None
    error: str | None = None


class FrontResult(BaseModel):
    times: list[float] = Field(default_factory=list)
    radii: list[float] = Field(default_factory=list)
    speed: float = 0.0
    tree_mass: float = 0.0
    error: str | None = None


class ConfigCheckResult(BaseModel):
    valid: bool = False
    kind: str | None = None
    tasks: int = 0
    config_hash: str | None = None
    field_path: str | None = None
    error: str | None = None


# ─── MCP plumbing ─────────────────────────────────────────────────────────────


def tool_result(markdown: str, model: BaseModel, *, is_error: bool = False) -> CallToolResult:
    """Bundle a Markdown ``content`` block with a validated structured payload.

    MCPServer validates the structured payload against the tool's output model
    on success and on error, so the error path must pass a fully valid model
    too (empty data plus ``error``).
    """
    structured: dict[str, Any] = model.model_dump(mode="json")
    return CallToolResult(
        content=[TextContent(type="text", text=markdown)],
        structured_content=structured,
        is_error=is_error,
    )
