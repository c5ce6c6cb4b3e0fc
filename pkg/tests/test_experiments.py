"""Tests for experiment-file validation and the seeded replica driver."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
import pytest
from factories import rates

from savanna_coexistence import experiments
from savanna_coexistence.config import EXPERIMENT_KINDS, MANIFEST_FILE, RECORDS_FILE
from savanna_coexistence.errors import ConfigInvalid, PartialFailure
from savanna_coexistence.experiments import (
    InitialSpec,
    grid_params,
    initial_configuration,
    load_spec,
    parse_spec,
    run_experiment,
    spec_hash,
    summarize,
    sweep_phase_diagram,
    with_overrides,
)
from savanna_coexistence.lattice import Geometry


def _base(**overrides) -> dict:
    data = {
        "kind": "stationary_density",
        "replicas": 2,
        "horizon": 1.0,
        "master_seed": 7,
        "params": {"beta": 2.0, "mu": 0.5, "nu": 0.5, "omega": {"kind": "constant", "value": 1}},
        "geometry": {"d": 1, "L": 2, "side": 16},
        "initial": {"pattern": "random", "density2": 0.5},
    }
    data.update(overrides)
    return data


def _comparable(records):
    return [r.model_dump(exclude={"wall_time"}) for r in records]


# ─── Validation ───────────────────────────────────────────────────────────────


def test_parse_accepts_minimal_file():
    spec = parse_spec(_base())
    assert spec.kind == "stationary_density"
    assert spec.model == "krone"
    assert spec.checkpoints == [1.0]
    assert len(spec.grid) == 1


@pytest.mark.parametrize(
    "data, path",
    [
        (_base(replicas=0), "replicas"),
        (_base(kind="coffee"), "kind"),
        (_base(unknown=1), "unknown"),
        (
            _base(
                params={
                    "beta": 1,
                    "mu": 1,
                    "nu": 1,
                    "omega": {"kind": "step", "omega0": 1, "omega1": 0.5, "delta0": 1.5},
                }
            ),
            "params.omega.delta0",
        ),
        (_base(geometry={"d": 1, "L": 2, "side": 4}), "geometry"),
        (_base(grid={"x": {"name": "mu", "values": [1.0, 0.1]}}), "grid.x.values.1"),
        (_base(kind="recovery"), "geometry.epsilon0"),
        (_base(model="truncated"), "geometry.epsilon0"),
        (_base(options={"direction": [2]}), "options.direction"),
        (_base(options={"direction": [1, 0]}), "options.direction"),
    ],
)
def test_parse_reports_field_path(data, path):
    """The first offending key comes back as a dotted path."""
    with pytest.raises(ConfigInvalid) as info:
        parse_spec(data)
    assert info.value.field_path == path


def test_sweeping_omega_on_a_step_rate_is_rejected():
    data = _base(
        params={
            "beta": 10,
            "mu": 0.5,
            "nu": 0.5,
            "omega": {"kind": "step", "omega0": 1, "omega1": 0.2, "delta0": 0.05},
        },
        grid={"x": {"name": "omega", "values": [1.0]}},
    )
    with pytest.raises(ConfigInvalid, match="constant growth rate") as info:
        parse_spec(data)
    assert info.value.field_path == "grid.x.values.0"


def test_y_axis_without_x_is_rejected():
    with pytest.raises(ConfigInvalid):
        parse_spec(_base(grid={"y": {"name": "beta", "values": [1.0]}}))


def test_load_spec_wraps_io_and_toml_errors(tmp_path):
    with pytest.raises(ConfigInvalid, match="cannot read") as info:
        load_spec(tmp_path / "missing.toml")
    assert info.value.field_path == ""
    bad = tmp_path / "bad.toml"
    bad.write_text("kind = [unterminated\n", encoding="utf-8")
    with pytest.raises(ConfigInvalid, match="not valid TOML"):
        load_spec(bad)


def test_load_spec_reads_toml(tmp_path):
    path = tmp_path / "exp.toml"
    path.write_text(
        'kind = "phase_sweep"\n'
        "horizons = [2.0, 1.0, 2.0]\n"
        "[params]\nbeta = 2.0\nmu = 0.5\nnu = 0.5\n"
        '[params.omega]\nkind = "constant"\nvalue = 1.0\n'
        "[geometry]\nd = 1\nL = 2\nside = 16\n"
        '[grid.x]\nname = "beta"\nvalues = [1.0, 2.0, 3.0]\n',
        encoding="utf-8",
    )
    spec = load_spec(path)
    assert spec.checkpoints == [1.0, 2.0]
    assert spec.grid.nx == 3
    assert [p.beta for p in grid_params(spec)] == [1.0, 2.0, 3.0]


def test_grid_indexing_is_row_major():
    spec = parse_spec(
        _base(
            grid={
                "x": {"name": "beta", "values": [1.0, 2.0, 3.0]},
                "y": {"name": "mu", "values": [0.5, 1.0]},
            }
        )
    )
    g = spec.grid
    assert len(g) == 6
    assert g.coords(4) == (1, 1)
    assert g.index(1, 1) == 4
    assert g.point(5) == {"beta": 3.0, "mu": 1.0}
    p = grid_params(spec)[5]
    assert (p.beta, p.mu) == (3.0, 1.0)


# ─── Overrides and hashing ────────────────────────────────────────────────────


def test_overrides_revalidate(tmp_path):
    spec = parse_spec(_base())
    changed = with_overrides(spec, seed=99, replicas=5, output_dir=tmp_path)
    assert (changed.master_seed, changed.replicas, changed.output_dir) == (99, 5, tmp_path)
    assert spec.master_seed == 7
    with pytest.raises(ConfigInvalid) as info:
        with_overrides(spec, replicas=0)
    assert info.value.field_path == "replicas"


def test_hash_ignores_output_dir(tmp_path):
    spec = parse_spec(_base())
    moved = with_overrides(spec, output_dir=tmp_path / "elsewhere")
    assert spec_hash(spec) == spec_hash(moved)
    assert spec_hash(spec) != spec_hash(with_overrides(spec, seed=8))
    assert len(spec_hash(spec)) == 64


# ─── Initial configurations ───────────────────────────────────────────────────


def test_initial_patterns(rng):
    g = Geometry(d=2, L=2, side=10)
    assert (initial_configuration(InitialSpec(pattern="all_two"), g, rng).state == 2).all()
    assert (initial_configuration(InitialSpec(pattern="empty"), g, rng).state == 0).all()
    block = initial_configuration(
        InitialSpec(pattern="seed_block", size=3, offset=8, value=1), g, rng
    )
    assert int((block.state == 1).sum()) == 9
    assert block.state[9, 0] == 1
    assert block.state[0, 8] == 1
    assert block.state[1, 1] == 0


def test_random_pattern_densities(rng):
    g = Geometry(d=2, L=2, side=100)
    config = initial_configuration(
        InitialSpec(pattern="random", density1=0.2, density2=0.3), g, rng
    )
    d1, d2 = config.densities()
    assert d1 == pytest.approx(0.2, abs=0.03)
    assert d2 == pytest.approx(0.3, abs=0.03)


def test_block_larger_than_lattice(rng):
    g = Geometry(d=1, L=1, side=6)
    with pytest.raises(ConfigInvalid) as info:
        initial_configuration(InitialSpec(pattern="seed_block", size=7), g, rng)
    assert info.value.field_path == "initial.size"


def test_densities_over_one_rejected():
    with pytest.raises(ValueError):
        InitialSpec(pattern="random", density1=0.6, density2=0.6)


# ─── Driver ───────────────────────────────────────────────────────────────────


def test_run_writes_records_and_manifest(tmp_path):
    spec = parse_spec(_base(grid={"x": {"name": "beta", "values": [1.0, 3.0]}}))
    result = run_experiment(spec, out_dir=tmp_path)
    m = result.manifest
    assert m.completed == 4
    assert m.grid_points == 2
    assert m.config_hash == spec_hash(spec)
    assert m.experiment_id == m.config_hash[:12]
    assert m.horizons == [1.0, 1.0]
    lines = (tmp_path / RECORDS_FILE).read_text(encoding="utf-8").splitlines()
    assert len(lines) == 4
    assert [(json.loads(x)["grid_index"], json.loads(x)["replica"]) for x in lines] == [
        (0, 0),
        (0, 1),
        (1, 0),
        (1, 1),
    ]
    manifest = json.loads((tmp_path / MANIFEST_FILE).read_text(encoding="utf-8"))
    assert manifest["master_seed"] == 7
    assert result.paths["csv"].exists()
    for r in result.records:
        assert 0 <= r.outputs["density1"] + r.outputs["density2"] <= 1


def test_records_do_not_depend_on_worker_count(tmp_path):
    """Each task draws only from its own seed."""
    spec = parse_spec(_base(replicas=3, grid={"x": {"name": "beta", "values": [1.0, 3.0]}}))
    one = run_experiment(spec, threads=1, out_dir=tmp_path / "one")
    two = run_experiment(spec, threads=2, out_dir=tmp_path / "two")
    assert _comparable(one.records) == _comparable(two.records)
    assert len({r.seed for r in one.records}) == 6


def test_same_seed_replays(tmp_path):
    spec = parse_spec(_base())
    a = run_experiment(spec, out_dir=tmp_path / "a")
    b = run_experiment(spec, out_dir=tmp_path / "b")
    c = run_experiment(with_overrides(spec, seed=8), out_dir=tmp_path / "c")
    assert _comparable(a.records) == _comparable(b.records)
    assert [r.seed for r in a.records] != [r.seed for r in c.records]


def test_partial_failure_keeps_completed_records(tmp_path, monkeypatch):
    real = experiments.RUNNERS["stationary_density"]

    def flaky(ctx):
        if ctx.replica == 1:
            raise RuntimeError("boom")
        return real(ctx)

    monkeypatch.setitem(experiments.RUNNERS, "stationary_density", flaky)
    spec = parse_spec(_base())
    with pytest.raises(PartialFailure) as info:
        run_experiment(spec, out_dir=tmp_path)
    assert info.value.completed == 1
    assert info.value.failures[0].replica == 1
    assert "RuntimeError: boom" in info.value.failures[0].error
    assert len((tmp_path / RECORDS_FILE).read_text(encoding="utf-8").splitlines()) == 1

    result = run_experiment(spec, out_dir=tmp_path, raise_on_failure=False)
    assert result.manifest.completed == 1
    assert len(result.manifest.failed) == 1


def test_pilot_doubles_horizon(tmp_path):
    """A lone tree under pure death: the pilot horizon is the start doubled k times."""
    spec = parse_spec(
        _base(
            kind="survival_finite_seed",
            horizon=0.01,
            params=rates(0, 1, 1, 0).model_dump(),
            initial={"pattern": "seed_block", "size": 1},
            options={"pilot_replicas": 4},
        )
    )
    result = run_experiment(spec, out_dir=tmp_path)
    assert result.manifest.pilot
    h = result.manifest.horizons[0]
    assert any(math.isclose(h, 0.01 * 2**k) for k in range(9))
    assert all(r.outputs["horizon"] == h for r in result.records)


def test_summarize_means_numbers_and_flags(tmp_path):
    result = run_experiment(parse_spec(_base()), out_dir=tmp_path)
    means = summarize(result.records)
    assert set(means) == {0}
    assert 0.0 <= means[0]["persisted"] <= 1.0
    assert "density2" in means[0]


# ─── Phase diagrams ───────────────────────────────────────────────────────────


def _sweep_spec(tmp_path):
    return parse_spec(
        _base(
            kind="phase_sweep",
            replicas=3,
            horizons=[0.5, 1.0],
            output_dir=str(tmp_path),
            initial={"pattern": "all_two"},
            grid={
                "x": {"name": "beta", "values": [0.5, 3.0]},
                "y": {"name": "mu", "values": [0.5, 2.0]},
            },
        )
    )


def test_phase_diagram(tmp_path):
    spec = _sweep_spec(tmp_path)
    diagram = sweep_phase_diagram(spec)
    assert len(diagram.cells) == 4
    assert diagram.checkpoints == [0.5, 1.0]
    assert diagram.horizon_violations() == []
    for c in diagram.cells:
        assert c.replicas == 3
        assert all(0.0 <= f <= 1.0 for f in c.survival_fraction)
    verdict = diagram.verdict_matrix()
    # beta=3, mu=0.5: mu*nu = 0.25 < omega*(beta-nu) = 2.5
    assert verdict[0, 1] == 1.0
    # beta=0.5, mu=2: no survival
    assert verdict[1, 0] == 0.0
    assert (tmp_path / "phase_cells.csv").exists()
    assert (tmp_path / "meanfield_verdict.dat").exists()
    assert (tmp_path / "survived_at_1.dat").exists()
    with pytest.raises(ValueError):
        diagram.monotone_violations(axis="nu")


def test_phase_sweep_pairs_seeds_along_beta(tmp_path):
    spec = _sweep_spec(tmp_path)
    result = run_experiment(spec)
    seeds = {(r.grid_index, r.replica): r.seed for r in result.records}
    for iy in range(2):
        for r in range(3):
            assert seeds[(spec.grid.index(0, iy), r)] == seeds[(spec.grid.index(1, iy), r)]
    assert seeds[(0, 0)] != seeds[(spec.grid.index(0, 1), 0)]


def test_phase_diagram_needs_two_axes(tmp_path):
    spec = parse_spec(_base(kind="phase_sweep", grid={"x": {"name": "beta", "values": [1.0]}}))
    with pytest.raises(ConfigInvalid) as info:
        sweep_phase_diagram(spec, out_dir=tmp_path)
    assert info.value.field_path == "grid.y"
    with pytest.raises(ConfigInvalid):
        sweep_phase_diagram(parse_spec(_base()), out_dir=tmp_path)


def test_phase_matrix_orientation():
    diagram = experiments.PhaseDiagram(
        x_name="beta",
        y_name="mu",
        x_values=[1.0, 2.0],
        y_values=[0.5],
        checkpoints=[1.0],
        cells=[
            experiments.PhaseCell(
                ix=0,
                iy=0,
                x=1,
                y=0.5,
                origin="a",
                meanfield_survival=False,
                survival_fraction=[0.8],
            ),
            experiments.PhaseCell(
                ix=1,
                iy=0,
                x=2,
                y=0.5,
                origin="a",
                meanfield_survival=True,
                survival_fraction=[0.4],
            ),
        ],
    )
    assert np.array_equal(diagram.matrix(), [[0.8, 0.4]])
    assert diagram.monotone_violations("beta") == [(1, 0)]
    assert diagram.monotone_violations("beta", tol=0.5) == []


# ─── Shipped example files ────────────────────────────────────────────────────

CONFIGS = sorted((Path(__file__).resolve().parent.parent / "configs").glob("*.toml"))


def test_one_example_file_per_kind():
    assert sorted(p.stem for p in CONFIGS) == sorted(EXPERIMENT_KINDS)


@pytest.mark.parametrize("path", CONFIGS, ids=lambda p: p.stem)
def test_example_files_validate(path):
    spec = load_spec(path)
    assert spec.kind == path.stem
    grid_params(spec)
