"""Static configuration: tolerances, defaults, and the vocabularies of the config file."""

from __future__ import annotations

from typing import Literal

LOG_LEVEL_ENV = "SAVANNA_LOG_LEVEL"

# Numeric hygiene.
SIMPLEX_TOL = 1e-12
RESIDUAL_TOL = 1e-10
STEP_TOL = 1e-9
IDE_INVARIANT_TOL = 1e-9

# Constant searches.
DEFAULT_A0 = 0.05
MAX_HALVINGS = 40

# Statistical checks.
GOF_LEVEL = 0.01
CONFIDENCE = 0.95

# Event engine: marks are drawn in chunks of this many.
SCHEDULE_CHUNK = 4096

# Branching random walk particle cap.
BRW_PARTICLE_CAP = 200_000

# Largest lattice the MCP diagnostics tool accepts.
MAX_TOOL_SITES = 1_000_000

# Experiment driver.
RECORDS_FILE = "records.jsonl"
MANIFEST_FILE = "manifest.json"
PILOT_GRID_OFFSET = 1 << 32  # pilot seeds never collide with task seeds
PILOT_DOUBLINGS = 8

# Stream identifiers of the graphical representation, in tie-break order.
STREAM_V = 0  # death of 1's and 2's, rate nu
STREAM_U = 1  # death of 1's only, rate mu - nu
STREAM_W = 2  # growth 1 -> 2 in every process, rate omega_min
STREAM_WHAT = 3  # conditional growth in chi, rate omega_max - omega_min
STREAM_ARROW = 4  # birth arrows, rate beta spread over the window

STREAM_NAMES = ("V", "U", "W", "What", "arrow")

EXPERIMENT_KINDS = (
    "phase_sweep",
    "survival_finite_seed",
    "stationary_density",
    "recovery",
    "brw_bounds",
    "moving_particles",
    "ide_front",
    "lemma81_verify",
    "diagnostics_suite",
)

MODEL_KINDS = ("staver_levin", "krone", "truncated", "truncated_staver_levin")

BOUNDARY_RULES = ("torus", "grass_frozen")

INITIAL_PATTERNS = ("all_two", "seed_block", "random", "empty")

SWEEPABLE_PARAMS = ("beta", "mu", "nu", "omega", "omega0", "omega1", "delta0")

# Literal aliases for the pydantic models. Keep in sync with the tuples above;
# tests/test_config.py asserts equality.

ExperimentKind = Literal[
    "phase_sweep",
    "survival_finite_seed",
    "stationary_density",
    "recovery",
    "brw_bounds",
    "moving_particles",
    "ide_front",
    "lemma81_verify",
    "diagnostics_suite",
]
ModelKind = Literal["staver_levin", "krone", "truncated", "truncated_staver_levin"]
BoundaryRule = Literal["torus", "grass_frozen"]
InitialPattern = Literal["all_two", "seed_block", "random", "empty"]
SweepableParam = Literal["beta", "mu", "nu", "omega", "omega0", "omega1", "delta0"]
OutputFormat = Literal["markdown", "json"]
