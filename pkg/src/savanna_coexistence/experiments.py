"""Batch experiments: TOML ingestion, seeded replica farms and phase-diagram sweeps.

An experiment is one TOML file validated into :class:`ExperimentSpec`. Its
grid (up to two swept rate parameters) times ``replicas`` gives the task
list; task (i, r) draws every random number from
``task_seed(master_seed, i, r)`` and nothing else, so records do not depend
on the worker count. Results stream to ``records.jsonl`` in task order, one
flushed line per record, and ``manifest.json`` pins the config hash, code
version, master seed and the horizons actually used.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import time
import tomllib
from collections import defaultdict
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import __version__
from .config import (
    DEFAULT_A0,
    MANIFEST_FILE,
    PILOT_DOUBLINGS,
    PILOT_GRID_OFFSET,
    RECORDS_FILE,
    ExperimentKind,
    InitialPattern,
    ModelKind,
    SweepableParam,
)
from .diagnostics.brw import simulate_brw_max
from .diagnostics.moving import moving_particles_walk
from .diagnostics.recovery import estimate_recovery_time, recovery_constants
from .diagnostics.report import run_diagnostics
from .engine import ModelRun, run_model
from .errors import ConfigInvalid, FailedTask, IoError, PartialFailure
from .ide import (
    build_test_functions,
    default_test_h,
    find_dtt_crossing,
    front_metrics,
    make_grid,
    solve_ide,
    theorem3_constants,
    verify_lemma81,
)
from .lattice import Configuration, Geometry
from .meanfield import classify_origin, survival_condition
from .models import RateParams, ResultRecord, Scalar
from .plotdata import emit_plot_data, write_matrix, write_table
from .seeding import rng_for, task_seed
from .snapshots import write_field, write_field_slice, write_lattice

logger = logging.getLogger(__name__)

_STRICT = ConfigDict(extra="forbid")

# Kinds whose runs need the small-box tiling of the lattice.
_BOX_KINDS = ("recovery", "brw_bounds", "moving_particles")


# ─── Experiment file schema ───────────────────────────────────────────────────


class GridAxis(BaseModel):
    model_config = _STRICT

    name: SweepableParam
    values: list[float] = Field(..., min_length=1)


class GridSpec(BaseModel):
    """Up to two swept parameters; point index = iy * len(x) + ix."""

    model_config = _STRICT

    x: GridAxis | None = None
    y: GridAxis | None = None

    @model_validator(mode="after")
    def _axes(self) -> GridSpec:
        if self.y is not None and self.x is None:
            raise ValueError("a y axis needs an x axis")
        if self.x is not None and self.y is not None and self.x.name == self.y.name:
            raise ValueError(f"both axes sweep '{self.x.name}'")
        return self

    @property
    def nx(self) -> int:
        return len(self.x.values) if self.x is not None else 1

    @property
    def ny(self) -> int:
        return len(self.y.values) if self.y is not None else 1

    def __len__(self) -> int:
        return self.nx * self.ny

    def coords(self, index: int) -> tuple[int, int]:
        return index % self.nx, index // self.nx

    def index(self, ix: int, iy: int) -> int:
        return iy * self.nx + ix

    def point(self, index: int) -> dict[str, float]:
        ix, iy = self.coords(index)
        out = {}
        if self.x is not None:
            out[self.x.name] = self.x.values[ix]
        if self.y is not None:
            out[self.y.name] = self.y.values[iy]
        return out


class InitialSpec(BaseModel):
    """Starting configuration of the lattice runs."""

    model_config = _STRICT

    pattern: InitialPattern = "all_two"
    size: int = Field(default=5, ge=1, description="Block side for seed_block")
    offset: int = Field(default=0, description="First coordinate of the block on every axis")
    value: Literal[1, 2] = 2
    density1: float = Field(default=0.0, ge=0, le=1)
    density2: float = Field(default=0.5, ge=0, le=1)

    @model_validator(mode="after")
    def _densities(self) -> InitialSpec:
        if self.density1 + self.density2 > 1:
            raise ValueError("density1 + density2 must not exceed 1")
        return self


class ExperimentOptions(BaseModel):
    """Kind-specific knobs. Every kind ignores the options it does not use."""

    model_config = _STRICT

    # survival_finite_seed
    pilot_replicas: int = Field(default=0, ge=0, description="0 keeps the configured horizon")
    pilot_target: float = Field(default=0.99, gt=0, le=1)
    # phase_sweep
    paired_axis: SweepableParam = "beta"
    # stationary_density
    density_threshold: float = Field(default=0.05, ge=0, le=1)
    # recovery
    alpha: float | None = Field(default=None, gt=0)
    a0: float | None = Field(default=None, ge=0, lt=1)
    a0_init: float = Field(default=DEFAULT_A0, gt=0, lt=0.25)
    # brw_bounds
    brw_time: float = Field(default=2.0, gt=0)
    brw_m: float = Field(default=4.0, gt=0)
    # moving_particles
    direction: list[int] = Field(default_factory=list)
    steps: int = Field(default=1, ge=1)
    delta: float = Field(default=0.0, ge=0, le=1)
    # ide_front, lemma81_verify
    h: float | None = Field(default=None, gt=0)
    half_width: float = Field(default=10.0, gt=0)
    front_height: float = Field(default=0.5, gt=0, le=1)
    front_radius: float = Field(default=1.0, gt=0)
    level: float = Field(default=0.25, gt=0, lt=1)
    crossing: bool = True
    # diagnostics_suite
    n_configs: int = Field(default=200, ge=1)
    # lattice and field kinds
    snapshot: bool = False


class ExperimentSpec(BaseModel):
    model_config = _STRICT

    kind: ExperimentKind
    replicas: int = Field(default=1, ge=1)
    horizon: float = Field(default=10.0, gt=0)
    horizons: list[float] = Field(
        default_factory=list, description="Checkpoints of a phase sweep; overrides horizon"
    )
    master_seed: int = Field(default=0, ge=0, lt=2**64)
    output_dir: Path = Path("results")
    model: ModelKind = "krone"
    sample_every: float | None = Field(default=None, gt=0)
    params: RateParams
    geometry: Geometry
    initial: InitialSpec = Field(default_factory=InitialSpec)
    grid: GridSpec = Field(default_factory=GridSpec)
    options: ExperimentOptions = Field(default_factory=ExperimentOptions)

    @model_validator(mode="after")
    def _positive_checkpoints(self) -> ExperimentSpec:
        if any(h <= 0 for h in self.horizons):
            raise ValueError("horizons must be positive")
        return self

    @property
    def checkpoints(self) -> list[float]:
        return sorted(set(self.horizons)) or [self.horizon]


# ─── Loading ──────────────────────────────────────────────────────────────────


def _dotted(loc: Sequence[int | str]) -> str:
    # Discriminated unions add the tag to the location: params.omega.step.delta0.
    parts = [
        str(part)
        for i, part in enumerate(loc)
        if not (i and loc[i - 1] == "omega" and part in ("constant", "step"))
    ]
    return ".".join(parts)


def _message(e: ValueError) -> str:
    if isinstance(e, ValidationError):
        return str(e.errors()[0]["msg"])
    return str(e)


def grid_params(spec: ExperimentSpec) -> list[RateParams]:
    """Rate parameters of every grid point, in point-index order."""
    out = []
    for i in range(len(spec.grid)):
        ix, iy = spec.grid.coords(i)
        p = spec.params
        for label, axis, k in (("x", spec.grid.x, ix), ("y", spec.grid.y, iy)):
            if axis is None:
                continue
            try:
                p = p.with_value(axis.name, axis.values[k])
            except ValueError as e:
                raise ConfigInvalid(_message(e), f"grid.{label}.values.{k}") from e
        out.append(p)
    return out


def _check_kind(spec: ExperimentSpec) -> None:
    needs_boxes = spec.kind in _BOX_KINDS or spec.model.startswith("truncated")
    if needs_boxes and spec.geometry.epsilon0 is None:
        raise ConfigInvalid(
            f"kind '{spec.kind}' with model '{spec.model}' needs small boxes",
            "geometry.epsilon0",
        )
    v = spec.options.direction
    unit = [0] * (spec.geometry.d - 1) + [1]
    if v and (len(v) != spec.geometry.d or sorted(abs(c) for c in v) != unit):
        raise ConfigInvalid(
            f"direction must be a unit vector +-e_k in {spec.geometry.d} dimensions",
            "options.direction",
        )


def parse_spec(data: Mapping[str, Any]) -> ExperimentSpec:
    """Validate a decoded experiment table; any problem becomes :class:`ConfigInvalid`."""
    try:
        spec = ExperimentSpec.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        raise ConfigInvalid(first["msg"], _dotted(first["loc"])) from e
    grid_params(spec)
    _check_kind(spec)
    return spec


def load_spec(path: Path) -> ExperimentSpec:
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except OSError as e:
        raise ConfigInvalid(f"cannot read {path}: {e}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigInvalid(f"{path} is not valid TOML: {e}") from e
    return parse_spec(data)


def with_overrides(
    spec: ExperimentSpec,
    *,
    seed: int | None = None,
    replicas: int | None = None,
    output_dir: Path | None = None,
) -> ExperimentSpec:
    """Apply command-line overrides, re-validating the result."""
    data = spec.model_dump(mode="json")
    if seed is not None:
        data["master_seed"] = seed
    if replicas is not None:
        data["replicas"] = replicas
    if output_dir is not None:
        data["output_dir"] = str(output_dir)
    return parse_spec(data)


def spec_hash(spec: ExperimentSpec) -> str:
    """SHA-256 of the canonical JSON of the spec, output directory excluded."""
    payload = spec.model_dump(mode="json", exclude={"output_dir"})
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


# ─── Initial configurations ───────────────────────────────────────────────────


def initial_configuration(
    init: InitialSpec, g: Geometry, rng: np.random.Generator
) -> Configuration:
    if init.pattern == "all_two":
        return Configuration.filled(g, 2)
    if init.pattern == "empty":
        return Configuration.filled(g, 0)
    if init.pattern == "seed_block":
        if init.size > g.side:
            raise ConfigInvalid(f"block of side {init.size} exceeds the lattice", "initial.size")
        idx = (np.arange(init.size) + init.offset) % g.side
        state = np.zeros(g.shape, dtype=np.int8)
        state[np.ix_(*([idx] * g.d))] = init.value
        return Configuration(g, state)
    u = rng.random(g.shape)
    state = np.where(u < init.density2, 2, np.where(u < init.density1 + init.density2, 1, 0))
    return Configuration(g, state.astype(np.int8))


# ─── Tasks ────────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class TaskContext:
    spec: ExperimentSpec
    params: RateParams
    grid_index: int
    replica: int
    seed: int
    horizon: float
    out_dir: Path

    @property
    def geometry(self) -> Geometry:
        return self.spec.geometry

    @property
    def options(self) -> ExperimentOptions:
        return self.spec.options

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)

    def initial(self, rng: np.random.Generator) -> Configuration:
        return initial_configuration(self.spec.initial, self.geometry, rng)

    def snapshot_path(self, suffix: str) -> Path:
        return self.out_dir / "snapshots" / f"g{self.grid_index:04d}_r{self.replica:05d}{suffix}"


Outputs = dict[str, Scalar]


def _finite(x: float | None) -> float | None:
    return x if x is not None and math.isfinite(x) else None


def survival_key(h: float) -> str:
    return f"survived@{h:g}"


def _final(run: ModelRun) -> Outputs:
    assert run.final is not None
    d1, d2 = run.final.densities()
    return {"density1": d1, "density2": d2, "events": run.events}


def _phase_sweep(ctx: TaskContext) -> Outputs:
    p = ctx.params
    rng = ctx.rng()
    checkpoints = ctx.spec.checkpoints
    run = run_model(ctx.spec.model, ctx.geometry, p, ctx.initial(rng), max(checkpoints), rng)
    out: Outputs = {
        survival_key(h): run.extinct_at is None or run.extinct_at > h for h in checkpoints
    }
    w = p.omega_min
    out.update(
        survived=run.extinct_at is None,
        extinct_at=run.extinct_at,
        origin=classify_origin(p, w).kind,
        meanfield_survival=survival_condition(p, w),
        **_final(run),
    )
    return out


def _survival_finite_seed(ctx: TaskContext) -> Outputs:
    rng = ctx.rng()
    run = run_model(ctx.spec.model, ctx.geometry, ctx.params, ctx.initial(rng), ctx.horizon, rng)
    if ctx.options.snapshot and run.final is not None:
        write_lattice(run.final, ctx.snapshot_path(".rle"))
    return {"extinct": run.extinct, "extinct_at": run.extinct_at, "horizon": ctx.horizon,
            **_final(run)}


def _stationary_density(ctx: TaskContext) -> Outputs:
    rng = ctx.rng()
    every = ctx.spec.sample_every or ctx.horizon / 20
    run = run_model(
        ctx.spec.model,
        ctx.geometry,
        ctx.params,
        ctx.initial(rng),
        ctx.horizon,
        rng,
        sample_every=every,
    )
    late = [d for t, d in zip(run.times, run.densities, strict=True) if t >= ctx.horizon / 2]
    assert run.final is not None
    nonzero = sum(run.final.densities())
    out = _final(run)
    out.update(
        nonzero_density=nonzero,
        persisted=nonzero >= ctx.options.density_threshold,
        mean_late_density1=float(np.mean([d[0] for d in late])) if late else None,
        mean_late_density2=float(np.mean([d[1] for d in late])) if late else None,
    )
    if ctx.options.snapshot and run.final is not None:
        write_lattice(run.final, ctx.snapshot_path(".rle"))
    return out


def _recovery(ctx: TaskContext) -> Outputs:
    g, p, opts = ctx.geometry, ctx.params, ctx.options
    rc = recovery_constants(p, g.d, opts.a0_init, alpha=opts.alpha)
    est = estimate_recovery_time(g, p, rc, rc.alpha, 1, ctx.seed, a0=opts.a0)
    tau = est.tau_samples[0]
    return {
        "tau": _finite(tau),
        "exceeded": tau > est.horizon,
        "t0_log_L": est.horizon,
        "bound": est.bound,
        "threshold_mass": est.threshold_mass,
        "a0": rc.a0,
        "rho": rc.rho,
    }


def _brw_bounds(ctx: TaskContext) -> Outputs:
    opts = ctx.options
    res = simulate_brw_max(ctx.geometry, ctx.params, opts.brw_time, 1, ctx.seed, opts.brw_m)
    return {
        "hit": res.empirical_tail > 0,
        "displacement": res.mean_displacement,
        "particles": res.max_particles,
        "bound": res.bound,
        "threshold": res.threshold,
        "cosh_excess": res.cosh_excess,
        "lattice_mgf_excess": res.lattice_mgf_excess,
    }


def _moving_particles(ctx: TaskContext) -> Outputs:
    g, opts = ctx.geometry, ctx.options
    v = tuple(opts.direction) or (1,) + (0,) * (g.d - 1)
    trials = moving_particles_walk(
        g,
        ctx.params,
        v,
        ctx.initial(ctx.rng()),
        opts.steps,
        ctx.seed,
        delta=opts.delta,
        grid_index=ctx.grid_index,
    )
    first = trials[0]
    return {
        "H00": first.H00,
        "G00": first.G00,
        "G0": first.G0,
        "S": first.S,
        "Hv1": first.Hv1,
        "success": len(trials) == opts.steps and all(t.success for t in trials),
        "steps": len(trials),
        "final_Hv1": trials[-1].Hv1,
    }


def _ide_front(ctx: TaskContext) -> Outputs:
    g, opts = ctx.geometry, ctx.options
    h = opts.h or 0.1
    f0 = make_grid(opts.half_width, h, g.d)
    f0.T[f0.radius() <= opts.front_radius] = opts.front_height
    traj = solve_ide(
        f0,
        ctx.params,
        ctx.horizon,
        kappa=g.kappa,
        sample_every=ctx.spec.sample_every or ctx.horizon / 10,
    )
    fm = front_metrics(traj, opts.level)
    final = traj.final
    if opts.snapshot:
        write_field(final, ctx.snapshot_path(".field"))
        write_field_slice(final, ctx.snapshot_path(".csv"))
    return {
        "speed": fm.slope,
        "final_radius": fm.radii[-1],
        "reached_edge": fm.radii[-1] >= final.half_width - max(g.kappa, 1.0),
        "sapling_mass": float(final.S.sum()) * h**g.d,
        "tree_mass": float(final.T.sum()) * h**g.d,
    }


def _lemma81_verify(ctx: TaskContext) -> Outputs:
    g, p, opts = ctx.geometry, ctx.params, ctx.options
    c = theorem3_constants(p, g.kappa, g.d)
    h = opts.h or default_test_h(c)
    f = build_test_functions(c, h)
    rep = verify_lemma81(f, c, p)
    out: Outputs = {
        "passed": rep.passed,
        "min_deriv_S": rep.min_deriv_S,
        "min_deriv_T": rep.min_deriv_T,
        "threshold": rep.threshold,
        "tolerance": rep.tolerance,
        "omega_saturated": rep.omega_saturated,
        "eps81": c.eps81,
        "h": h,
    }
    if opts.crossing:
        out["nu_crossing"] = find_dtt_crossing(f, c, p)
        out["nu_crossing_plateau"] = p.omega_max * c.gamma0
    return out


def _diagnostics_suite(ctx: TaskContext) -> Outputs:
    rep = run_diagnostics(ctx.params, ctx.geometry, seed=ctx.seed, n_configs=ctx.options.n_configs)
    failed = [c.name for c in rep.checks if not c.passed]
    return {
        "passed": rep.passed,
        "checks": len(rep.checks),
        "failed": len(failed),
        "failed_checks": "; ".join(failed),
    }


RUNNERS: dict[str, Callable[[TaskContext], Outputs]] = {
    "phase_sweep": _phase_sweep,
    "survival_finite_seed": _survival_finite_seed,
    "stationary_density": _stationary_density,
    "recovery": _recovery,
    "brw_bounds": _brw_bounds,
    "moving_particles": _moving_particles,
    "ide_front": _ide_front,
    "lemma81_verify": _lemma81_verify,
    "diagnostics_suite": _diagnostics_suite,
}


def seed_group(spec: ExperimentSpec, grid_index: int) -> int:
    """Grid index the seed is drawn for.

    Phase sweeps pair seeds along ``options.paired_axis``: cells that differ
    only in that parameter run on the same per-replica seeds.
    """
    if spec.kind != "phase_sweep":
        return grid_index
    ix, iy = spec.grid.coords(grid_index)
    paired = spec.options.paired_axis
    if spec.grid.x is not None and spec.grid.x.name == paired:
        return spec.grid.index(0, iy)
    if spec.grid.y is not None and spec.grid.y.name == paired:
        return spec.grid.index(ix, 0)
    return grid_index


def run_task(
    spec: ExperimentSpec,
    params: RateParams,
    grid_index: int,
    replica: int,
    horizon: float,
    experiment_id: str,
    out_dir: Path,
) -> ResultRecord | FailedTask:
    """Run one replica; failures come back as :class:`FailedTask` instead of raising."""
    started = time.perf_counter()
    seed = task_seed(spec.master_seed, seed_group(spec, grid_index), replica)
    ctx = TaskContext(spec, params, grid_index, replica, seed, horizon, out_dir)
    try:
        outputs = RUNNERS[spec.kind](ctx)
    except Exception as e:
        logger.warning("task (%d, %d) raised", grid_index, replica, exc_info=True)
        return FailedTask(grid_index, replica, f"{type(e).__name__}: {e}")
    return ResultRecord(
        experiment_id=experiment_id,
        kind=spec.kind,
        grid_index=grid_index,
        replica=replica,
        seed=seed,
        point=spec.grid.point(grid_index),
        outputs={k: _finite(v) if isinstance(v, float) else v for k, v in outputs.items()},
        wall_time=time.perf_counter() - started,
    )


# ─── Pilot horizons ───────────────────────────────────────────────────────────


def pilot_horizon(spec: ExperimentSpec, p: RateParams, grid_index: int) -> float:
    """Double the horizon from ``spec.horizon`` until ``pilot_target`` of the pilot runs die out.

    Pilot seeds live in their own grid-index range, so the pilot never
    reuses a replica's randomness.
    """
    opts = spec.options
    g = spec.geometry
    h = spec.horizon
    for _ in range(PILOT_DOUBLINGS + 1):
        extinct = 0
        for r in range(opts.pilot_replicas):
            rng = rng_for(spec.master_seed, PILOT_GRID_OFFSET + grid_index, r)
            init = initial_configuration(spec.initial, g, rng)
            extinct += run_model(spec.model, g, p, init, h, rng).extinct
        fraction = extinct / opts.pilot_replicas
        logger.info("pilot at grid point %d: %.3f extinct by t=%g", grid_index, fraction, h)
        if fraction >= opts.pilot_target:
            return h
        h *= 2
    h /= 2
    logger.warning(
        "pilot at grid point %d never reached %.3f extinct; keeping t=%g",
        grid_index,
        opts.pilot_target,
        h,
    )
    return h


def task_horizon(spec: ExperimentSpec, p: RateParams, grid_index: int) -> float:
    if spec.kind == "phase_sweep":
        return max(spec.checkpoints)
    if spec.kind == "survival_finite_seed" and spec.options.pilot_replicas > 0:
        return pilot_horizon(spec, p, grid_index)
    return spec.horizon


# ─── Driver ───────────────────────────────────────────────────────────────────


class Manifest(BaseModel):
    experiment_id: str
    kind: str
    config_hash: str
    code_version: str
    master_seed: int
    replicas: int
    grid_points: int
    horizons: list[float] = Field(description="Horizon used at each grid point")
    checkpoints: list[float] = Field(default_factory=list)
    pilot: bool = False
    completed: int = 0
    failed: list[FailedTask] = Field(default_factory=list)
    wall_time: float = 0.0
    spec: dict[str, Any] = Field(default_factory=dict)


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    manifest: Manifest
    out_dir: Path
    records: list[ResultRecord] = field(default_factory=list)
    failures: list[FailedTask] = field(default_factory=list)
    paths: dict[str, Path] = field(default_factory=dict)


def _write_json(path: Path, payload: str) -> Path:
    try:
        path.write_text(payload + "\n", encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e
    return path


def run_experiment(
    spec: ExperimentSpec,
    *,
    threads: int = 1,
    out_dir: Path | None = None,
    raise_on_failure: bool = True,
) -> ExperimentResult:
    """Run every (grid point, replica) task and persist records, manifest and plot data.

    Tasks run on a joblib pool of ``threads`` workers; results come back in
    task order and are appended to ``records.jsonl`` one flushed line at a
    time. Raises :class:`PartialFailure` after writing when some replicas
    failed, unless ``raise_on_failure`` is off.
    """
    started = time.perf_counter()
    out = Path(out_dir) if out_dir is not None else spec.output_dir
    params = grid_params(spec)
    digest = spec_hash(spec)
    experiment_id = digest[:12]
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoError(f"cannot create output directory {out}: {e}") from e

    horizons = [task_horizon(spec, p, i) for i, p in enumerate(params)]
    tasks = [(i, r) for i in range(len(params)) for r in range(spec.replicas)]
    logger.info(
        "experiment %s (%s, config %s): %d task(s) on %d worker(s)",
        experiment_id,
        spec.kind,
        digest[:16],
        len(tasks),
        threads,
    )
    records: list[ResultRecord] = []
    failures: list[FailedTask] = []
    jobs = (
        delayed(run_task)(spec, params[i], i, r, horizons[i], experiment_id, out) for i, r in tasks
    )
    records_path = out / RECORDS_FILE
    try:
        with records_path.open("w", encoding="utf-8") as fh:
            for item in Parallel(n_jobs=threads, return_as="generator")(jobs):
                if isinstance(item, FailedTask):
                    logger.warning(
                        "replica (%d, %d) failed: %s", item.grid_index, item.replica, item.error
                    )
                    failures.append(item)
                    continue
                fh.write(item.model_dump_json() + "\n")
                fh.flush()
                records.append(item)
    except OSError as e:
        raise IoError(f"cannot write {records_path}: {e}") from e

    manifest = Manifest(
        experiment_id=experiment_id,
        kind=spec.kind,
        config_hash=digest,
        code_version=__version__,
        master_seed=spec.master_seed,
        replicas=spec.replicas,
        grid_points=len(params),
        horizons=horizons,
        checkpoints=spec.checkpoints if spec.kind == "phase_sweep" else [],
        pilot=spec.kind == "survival_finite_seed" and spec.options.pilot_replicas > 0,
        completed=len(records),
        failed=failures,
        wall_time=time.perf_counter() - started,
        spec=spec.model_dump(mode="json"),
    )
    paths = {
        "records": records_path,
        "manifest": _write_json(out / MANIFEST_FILE, manifest.model_dump_json(indent=2)),
    }
    matrix = None
    if spec.kind == "phase_sweep" and spec.grid.x is not None and spec.grid.y is not None:
        matrix = (spec.grid.x.name, spec.grid.y.name, survival_key(max(spec.checkpoints)))
    paths.update(emit_plot_data(records, out, matrix=matrix))
    logger.info(
        "experiment %s finished: %d record(s), %d failure(s) in %.1fs",
        experiment_id,
        len(records),
        len(failures),
        manifest.wall_time,
    )
    result = ExperimentResult(spec, manifest, out, records, failures, paths)
    if failures and raise_on_failure:
        raise PartialFailure(failures, len(records))
    return result


def summarize(records: Sequence[ResultRecord]) -> dict[int, dict[str, float]]:
    """Mean of every numeric or boolean output per grid point."""
    values: dict[int, dict[str, list[float]]] = defaultdict(lambda: defaultdict(list))
    for r in records:
        for k, v in r.outputs.items():
            if isinstance(v, bool | int | float):
                values[r.grid_index][k].append(float(v))
    return {
        i: {k: float(np.mean(vs)) for k, vs in sorted(outs.items())}
        for i, outs in sorted(values.items())
    }


# ─── Phase diagrams ───────────────────────────────────────────────────────────


class PhaseCell(BaseModel):
    ix: int
    iy: int
    x: float
    y: float
    origin: str
    meanfield_survival: bool
    survival_fraction: list[float] = Field(description="Per checkpoint, in increasing order")
    replicas: int = 0


class PhaseDiagram(BaseModel):
    x_name: str
    y_name: str
    x_values: list[float]
    y_values: list[float]
    checkpoints: list[float]
    cells: list[PhaseCell] = Field(default_factory=list)
    failed: int = 0

    def matrix(self, checkpoint: int = -1) -> np.ndarray:
        z = np.full((len(self.y_values), len(self.x_values)), np.nan)
        for c in self.cells:
            z[c.iy, c.ix] = c.survival_fraction[checkpoint]
        return z

    def verdict_matrix(self) -> np.ndarray:
        z = np.zeros((len(self.y_values), len(self.x_values)))
        for c in self.cells:
            z[c.iy, c.ix] = float(c.meanfield_survival)
        return z

    def horizon_violations(self) -> list[PhaseCell]:
        """Cells whose survival fraction grows with the horizon."""
        return [
            c
            for c in self.cells
            if any(b > a for a, b in zip(c.survival_fraction, c.survival_fraction[1:]))
        ]

    def monotone_violations(self, axis: str = "beta", tol: float = 0.0) -> list[tuple[int, int]]:
        """(ix, iy) cells whose fraction drops by more than ``tol`` along ``axis``."""
        z = self.matrix()
        if axis == self.x_name:
            steps = np.diff(z, axis=1)
            return [(int(ix) + 1, int(iy)) for iy, ix in zip(*np.nonzero(steps < -tol))]
        if axis == self.y_name:
            steps = np.diff(z, axis=0)
            return [(int(ix), int(iy) + 1) for iy, ix in zip(*np.nonzero(steps < -tol))]
        raise ValueError(f"'{axis}' is not an axis of this diagram")


def sweep_phase_diagram(
    spec: ExperimentSpec, *, threads: int = 1, out_dir: Path | None = None
) -> PhaseDiagram:
    """Mean-field verdict and Monte Carlo survival fraction per cell of a two-axis grid.

    Every run starts from the configured initial state (all 2's by default),
    runs to the last checkpoint, and reports survival at each checkpoint.
    Writes ``phase_cells.csv`` and ``meanfield_verdict.dat`` beside the
    experiment files.
    """
    if spec.kind != "phase_sweep":
        raise ConfigInvalid("a phase diagram needs kind = 'phase_sweep'", "kind")
    if spec.grid.x is None or spec.grid.y is None:
        raise ConfigInvalid("a phase diagram needs two grid axes", "grid.y")
    result = run_experiment(spec, threads=threads, out_dir=out_dir, raise_on_failure=False)
    by_cell: dict[int, list[ResultRecord]] = defaultdict(list)
    for r in result.records:
        by_cell[r.grid_index].append(r)
    checkpoints = spec.checkpoints
    cells = []
    for i, p in enumerate(grid_params(spec)):
        ix, iy = spec.grid.coords(i)
        recs = by_cell.get(i, [])
        fractions = [
            float(np.mean([bool(r.outputs[survival_key(h)]) for r in recs])) if recs else math.nan
            for h in checkpoints
        ]
        w = p.omega_min
        cells.append(
            PhaseCell(
                ix=ix,
                iy=iy,
                x=spec.grid.x.values[ix],
                y=spec.grid.y.values[iy],
                origin=classify_origin(p, w).kind,
                meanfield_survival=survival_condition(p, w),
                survival_fraction=fractions,
                replicas=len(recs),
            )
        )
    diagram = PhaseDiagram(
        x_name=spec.grid.x.name,
        y_name=spec.grid.y.name,
        x_values=list(spec.grid.x.values),
        y_values=list(spec.grid.y.values),
        checkpoints=checkpoints,
        cells=cells,
        failed=len(result.failures),
    )
    out = result.out_dir
    write_matrix(
        diagram.verdict_matrix(),
        diagram.x_values,
        diagram.y_values,
        out / "meanfield_verdict.dat",
        x_name=diagram.x_name,
        y_name=diagram.y_name,
    )
    write_table(
        [diagram.x_name, diagram.y_name, "origin", "meanfield_survival", "replicas"]
        + [survival_key(h) for h in checkpoints],
        [
            [c.x, c.y, c.origin, c.meanfield_survival, c.replicas, *c.survival_fraction]
            for c in cells
        ],
        out / "phase_cells.csv",
    )
    if result.failures:
        raise PartialFailure(result.failures, len(result.records))
    return diagram
