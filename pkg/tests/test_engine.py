"""Event engines: schedule replay, coupled monotonicity and the Gillespie path."""

from __future__ import annotations

import io
import json
import time
from collections import Counter

import numpy as np
import pytest
from factories import rates, step

from savanna_coexistence.config import STREAM_ARROW, STREAM_NAMES, STREAM_WHAT
from savanna_coexistence.engine import (
    CoupledState,
    Mark,
    SiteRates,
    apply_mark,
    build_schedule,
    exact_transitions,
    normalize_kind,
    run_coupled,
    run_model,
    run_ordered_pair,
)
from savanna_coexistence.errors import CouplingViolation, GeometryInvalid, RateInvalid
from savanna_coexistence.lattice import Configuration, Geometry

MIXED = rates(2.5, 0.8, 0.4, step(2.0, 0.5, 0.3))

# ─── Schedule ────────────────────────────────────────────────────────────────


def test_schedule_replays_identical_marks(boxed_geometry):
    s = build_schedule(boxed_geometry, MIXED, 5.0, seed=99)
    first = list(s)
    assert first == list(s)
    assert first
    assert all(a.time < b.time for a, b in zip(first, first[1:], strict=False))
    assert first[-1].time <= 5.0


def test_schedule_stream_rates(boxed_geometry):
    s = build_schedule(boxed_geometry, MIXED, 1.0, seed=0)
    assert list(s.stream_rates) == pytest.approx([0.4, 0.4, 0.5, 1.5, 2.5])
    assert s.total_rate == pytest.approx(40 * 5.3)


def test_schedule_mark_count_matches_the_total_rate(boxed_geometry):
    s = build_schedule(boxed_geometry, MIXED, 20.0, seed=3)
    n = sum(1 for _ in s)
    mean = s.total_rate * 20.0
    assert abs(n - mean) < 5 * np.sqrt(mean)


def test_arrow_targets_stay_in_range(boxed_geometry):
    g = boxed_geometry
    for mark in build_schedule(g, MIXED, 3.0, seed=1):
        if mark.stream != STREAM_ARROW:
            assert mark.target is None
            continue
        gap = (mark.target[0] - mark.site[0]) % g.side
        assert min(gap, g.side - gap) <= g.L


def test_schedule_rejects_bad_inputs(boxed_geometry, survival_rates):
    with pytest.raises(ValueError):
        build_schedule(boxed_geometry, survival_rates, 0.0, seed=0)
    inverted = survival_rates.model_copy(update={"nu": 2.0})
    with pytest.raises(RateInvalid):
        build_schedule(boxed_geometry, inverted, 1.0, seed=0)


# ─── Coupling ────────────────────────────────────────────────────────────────


def _ordered_start(g: Geometry, rng: np.random.Generator) -> CoupledState:
    chi = rng.integers(0, 3, size=g.shape)
    eta = np.minimum(chi, rng.integers(0, 3, size=g.shape))
    xi = np.minimum(eta, rng.integers(0, 3, size=g.shape))
    return CoupledState(Configuration(g, chi), Configuration(g, eta), Configuration(g, xi))


@pytest.mark.parametrize("seed", range(5))
def test_coupled_runs_stay_ordered(seed):
    g = Geometry(d=1, L=5, epsilon0=0.2, side=40)
    state = _ordered_start(g, np.random.default_rng(seed))
    seen = []
    run = run_coupled(
        build_schedule(g, MIXED, 10.0, seed=seed),
        state,
        observer=lambda mark, st: seen.append(st.ordered()),
    )
    assert all(seen)
    assert run.final.ordered()
    assert run.events == len(seen)
    assert run.effective <= run.events


def test_coupled_run_in_the_plane(plane_geometry, rng):
    state = _ordered_start(plane_geometry, rng)
    run = run_coupled(build_schedule(plane_geometry, MIXED, 2.0, seed=5), state, sample_every=0.5)
    assert run.final.ordered()
    assert [s.t for s in run.samples] == [0.0, 0.5, 1.0, 1.5, 2.0]


def test_event_log_lines_are_json(boxed_geometry, rng):
    state = _ordered_start(boxed_geometry, rng)
    log = io.StringIO()
    run = run_coupled(build_schedule(boxed_geometry, MIXED, 2.0, seed=8), state, event_log=log)
    lines = log.getvalue().splitlines()
    assert len(lines) == run.effective
    record = json.loads(lines[0])
    assert set(record) == {"t", "site", "target", "stream", "mark", "pre", "post"}
    assert record["stream"] in STREAM_NAMES


def test_unordered_start_rejected(boxed_geometry):
    g = boxed_geometry
    state = CoupledState(Configuration(g), Configuration.filled(g, 2), Configuration(g))
    with pytest.raises(ValueError, match="chi >= eta >= xi"):
        run_coupled(build_schedule(g, MIXED, 1.0, seed=0), state)


def test_truncated_process_needs_boxes(tiny_geometry):
    g = tiny_geometry
    full = Configuration.filled(g, 2)
    state = CoupledState(full, full.copy(), full.copy())
    with pytest.raises(GeometryInvalid):
        run_coupled(build_schedule(g, MIXED, 1.0, seed=0), state)


def test_violation_is_raised_when_the_order_breaks(boxed_geometry, monkeypatch):
    """A broken xi update that spawns trees must be caught at the event."""
    import savanna_coexistence.engine as engine

    real = engine.apply_mark

    def broken(mark, c, role, p):
        if role == "xi" and c.state[mark.site] == 0:
            c.apply_flip(mark.site, 2)
            return True
        return real(mark, c, role, p)

    monkeypatch.setattr(engine, "apply_mark", broken)
    g = boxed_geometry
    state = CoupledState(Configuration(g), Configuration(g), Configuration(g))
    with pytest.raises(CouplingViolation):
        run_coupled(build_schedule(g, MIXED, 1.0, seed=0), state)


@pytest.mark.parametrize("role", ["chi", "eta", "xi"])
def test_each_model_is_attractive(boxed_geometry, rng, role):
    g = boxed_geometry
    upper = rng.integers(0, 3, size=g.shape)
    lower = np.minimum(upper, rng.integers(0, 3, size=g.shape))
    s = build_schedule(g, MIXED, 5.0, seed=11)
    assert run_ordered_pair(s, Configuration(g, upper), Configuration(g, lower), role) == 0


def test_constant_growth_keeps_chi_and_eta_identical(boxed_geometry, rng):
    g = boxed_geometry
    start = Configuration(g, rng.integers(0, 3, size=g.shape))
    state = CoupledState(start, start.copy(), Configuration(g))
    same = []
    run = run_coupled(
        build_schedule(g, rates(2.5, 0.8, 0.4, 1.0), 10.0, seed=8),
        state,
        observer=lambda mark, st: same.append(np.array_equal(st.chi.state, st.eta.state)),
    )
    assert run.effective > 0
    assert all(same)
    assert np.array_equal(run.final.chi.state, run.final.eta.state)


def test_graphical_first_jumps_match_the_generator():
    """Tiny torus, 6000 replayed schedules against the exact jump-chain law within 4 sigma."""
    g = Geometry(d=1, L=1, side=6)
    c = Configuration(g, [2, 1, 0, 0, 2, 1])
    transitions = exact_transitions("staver_levin", c, MIXED)
    total = sum(r for _, _, r in transitions)
    n = 6000
    counts: Counter = Counter()
    for seed in range(n):
        chi = c.copy()
        for mark in build_schedule(g, MIXED, 50.0 / total, seed=seed):
            if apply_mark(mark, chi, "chi", MIXED):
                x = mark.target if mark.target is not None else mark.site
                counts[(x[0], int(chi.state[x]))] += 1
                break
    jumps = sum(counts.values())
    assert jumps > n * 0.99
    for (x, new, rate) in transitions:
        prob = rate / total
        expected = jumps * prob
        sd = np.sqrt(jumps * prob * (1 - prob))
        assert abs(counts[(x[0], new)] - expected) <= 4 * sd + 1, (x, new)


def test_growth_marks_read_a_single_window():
    """20 000 rejected growth marks on a 400 000-site ring stay far below a lattice scan each."""
    g = Geometry(d=1, L=2, side=400_000)
    c = Configuration.filled(g, 1)
    marks = [Mark(0.0, (x,), STREAM_WHAT, None, 1.0) for x in range(0, g.side, 20)]
    start = time.perf_counter()
    changed = [apply_mark(m, c, "chi", MIXED) for m in marks]
    assert time.perf_counter() - start < 2.0
    assert not any(changed)
    assert c.grass_count((7,)) == 0


def test_dashed_arrows_skip_the_truncated_process(boxed_geometry):
    g = boxed_geometry
    for mark in build_schedule(g, MIXED, 5.0, seed=4):
        if mark.stream == STREAM_ARROW and mark.target is not None and not mark.solid:
            break
    else:
        pytest.fail("no dashed arrow in the schedule")
    c = Configuration(g)
    c.apply_flip(mark.site, 2)
    assert apply_mark(mark, c.copy(), "eta", MIXED) is True
    assert apply_mark(mark, c.copy(), "xi", MIXED) is False


# ─── Gillespie path ──────────────────────────────────────────────────────────


def test_normalize_kind_accepts_both_spellings():
    assert normalize_kind("StaverLevin") == "staver_levin"
    assert normalize_kind("truncated") == "truncated"
    with pytest.raises(ValueError):
        normalize_kind("voter")


@pytest.mark.parametrize("kind", ["staver_levin", "krone", "truncated", "truncated_staver_levin"])
def test_site_rates_match_the_enumerated_generator(rng, kind):
    g = Geometry(d=1, L=5, epsilon0=0.2, side=40, kappa=1.4)
    c = Configuration(g, rng.integers(0, 3, size=g.shape))
    totals: Counter = Counter()
    for x, _, rate in exact_transitions(kind, c, MIXED):
        totals[x[0]] += rate
    fast = SiteRates(normalize_kind(kind), c, MIXED)(np.arange(g.n_sites))
    for i in range(g.n_sites):
        assert fast[i] == pytest.approx(totals[i], rel=1e-12, abs=1e-15)


def test_first_jump_frequencies_match_the_generator():
    """Tiny torus, 10 000 first jumps against the exact jump-chain law within 4 sigma."""
    g = Geometry(d=1, L=1, side=6)
    c = Configuration(g, [2, 1, 0, 0, 2, 1])
    transitions = exact_transitions("staver_levin", c, MIXED)
    total = sum(r for _, _, r in transitions)
    n = 10_000
    counts: Counter = Counter()
    rng = np.random.default_rng(2024)
    for _ in range(n):
        first: list[tuple[int, int]] = []

        def observe(t, config, first=first):
            if t > 0 and not first:
                diff = np.flatnonzero(config.state != c.state)
                first.append((int(diff[0]), int(config.state[diff[0]])))

        run_model("staver_levin", g, MIXED, c, 3.0 / total, rng, observer=observe)
        if first:
            counts[first[0]] += 1
    jumps = sum(counts.values())
    assert jumps > n * 0.9
    for (x, new, rate) in transitions:
        prob = rate / total
        expected = jumps * prob
        sd = np.sqrt(jumps * prob * (1 - prob))
        assert abs(counts[(x[0], new)] - expected) <= 4 * sd + 1, (x, new)


def test_run_model_leaves_init_untouched(boxed_geometry, survival_rates):
    init = Configuration.filled(boxed_geometry, 2)
    run = run_model("krone", boxed_geometry, survival_rates, init, 2.0, 1, sample_every=0.5)
    assert np.all(init.state == 2)
    assert run.times == [0.0, 0.5, 1.0, 1.5, 2.0]
    assert run.final is not init
    assert all(v == 0 for v in run.final.count_mismatches().values())


def test_empty_start_is_already_extinct(boxed_geometry, survival_rates):
    run = run_model("krone", boxed_geometry, survival_rates, Configuration(boxed_geometry), 5.0, 0)
    assert run.extinct
    assert run.extinct_at == 0.0
    assert run.events == 0


def test_pure_death_dies_out(boxed_geometry):
    p = rates(0.0, 1.0, 1.0, 0.0)
    run = run_model("krone", boxed_geometry, p, Configuration.filled(boxed_geometry, 2), 100.0, 4)
    assert run.extinct
    assert run.events == boxed_geometry.n_sites


def test_stop_at_box_mass(boxed_geometry, survival_rates):
    init = Configuration(boxed_geometry)
    init.apply_flip((0,), 2)
    run = run_model(
        "truncated",
        boxed_geometry,
        survival_rates,
        init,
        50.0,
        12,
        stop_at_box_mass=2,
        record_boxes=True,
        sample_every=1.0,
    )
    peak = int((run.final.box_n1 + run.final.box_n2).max())
    if run.stopped_at is not None:
        assert peak == 2
        assert run.end_time == run.stopped_at
    else:
        assert peak < 2
    assert len(run.box_counts) == len(run.times)


def test_same_seed_same_run(boxed_geometry):
    init = Configuration.filled(boxed_geometry, 2)
    a = run_model("staver_levin", boxed_geometry, MIXED, init, 3.0, 77, sample_every=1.0)
    b = run_model("staver_levin", boxed_geometry, MIXED, init, 3.0, 77, sample_every=1.0)
    assert a.densities == b.densities
    assert a.events == b.events
