"""Event engines: the graphical representation and a direct Gillespie path.

The graphical representation puts independent Poisson marks on every site:

======  ====================  ============================================
stream  rate per site         effect
======  ====================  ============================================
V       nu                    1 -> 0 and 2 -> 0
U       mu - nu               1 -> 0
W       omega_min             1 -> 2 in every process
What    omega_max - omega_min 1 -> 2 in chi only, accepted with probability
                              (omega(f0) - omega_min) / (omega_max - omega_min)
arrow   beta                  target uniform in x + [-L, L]^d; a 2 at x
                              turns a 0 at the target into a 1. Solid
                              arrows (target in the truncated neighborhood)
                              act in all three processes, dashed ones in
                              chi and eta only.
======  ====================  ============================================

Running the Staver-Levin process chi, Krone's process eta (growth at
omega_min) and the truncated process xi off the same marks keeps
chi >= eta >= xi at every site, which :func:`run_coupled` asserts per event.

Superposing all per-site streams gives one homogeneous Poisson stream of
rate ``n_sites * (mu + omega_max + beta)``, since the stream rates do not
depend on the state. Each mark then picks its site uniformly and its stream
in proportion to the rates. :class:`EventSchedule` draws that stream lazily
in fixed-size chunks from a seeded generator, so iterating the same
schedule twice replays identical marks.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Callable, Iterator
from dataclasses import dataclass, field
from typing import Literal, NamedTuple, TextIO

import numpy as np
import numpy.typing as npt

from .config import (
    SCHEDULE_CHUNK,
    STREAM_ARROW,
    STREAM_NAMES,
    STREAM_U,
    STREAM_V,
    STREAM_W,
    STREAM_WHAT,
    ModelKind,
)
from .errors import CouplingViolation, GeometryInvalid, RateInvalid
from .lattice import Configuration, Geometry, Site, brute_force_count, truncated_neighborhood
from .models import RateParams
from .ratetree import RateTree
from .seeding import as_generator

logger = logging.getLogger(__name__)


# ─── Schedule ─────────────────────────────────────────────────────────────────


class Mark(NamedTuple):
    time: float
    site: Site
    stream: int
    target: Site | None = None
    u: float = 0.0
    solid: bool = False


@dataclass(frozen=True)
class EventSchedule:
    """Replayable marks of the graphical representation up to ``horizon``."""

    geometry: Geometry
    params: RateParams
    horizon: float
    seed: int
    chunk: int = SCHEDULE_CHUNK

    @property
    def stream_rates(self) -> npt.NDArray[np.float64]:
        p = self.params
        return np.array(
            [p.nu, p.mu - p.nu, p.omega_min, p.omega_max - p.omega_min, p.beta],
            dtype=np.float64,
        )

    @property
    def total_rate(self) -> float:
        return float(self.stream_rates.sum()) * self.geometry.n_sites

    def __iter__(self) -> Iterator[Mark]:
        g = self.geometry
        rates = self.stream_rates
        site_rate = float(rates.sum())
        if site_rate <= 0:
            return
        probs = rates / site_rate
        scale = 1.0 / self.total_rate
        rng = np.random.default_rng(self.seed)
        boxes = g.boxes if g.periodic else None
        t = 0.0
        while True:
            gaps = rng.exponential(scale, self.chunk)
            flat = rng.integers(0, g.n_sites, self.chunk)
            streams = rng.choice(len(rates), size=self.chunk, p=probs)
            offsets = rng.integers(-g.L, g.L + 1, size=(self.chunk, g.d))
            uniforms = rng.random(self.chunk)

            times = t + np.cumsum(gaps)
            coords = np.stack(np.unravel_index(flat, g.shape), axis=1)
            raw = coords + offsets
            if g.periodic:
                targets = raw % g.side
                inside = np.ones(self.chunk, dtype=bool)
            else:
                targets = raw
                inside = np.all((raw >= 0) & (raw < g.side), axis=1)
            if boxes is not None:
                bx = boxes.site_box[coords]
                by = boxes.site_box[targets % g.side]
                delta = (by - bx) % boxes.boxes_per_axis
                dist = np.minimum(delta, boxes.boxes_per_axis - delta)
                solid = np.all(dist <= boxes.radius, axis=1)
            else:
                solid = np.zeros(self.chunk, dtype=bool)

            for k in range(self.chunk):
                tk = float(times[k])
                if tk > self.horizon:
                    return
                stream = int(streams[k])
                site = tuple(int(c) for c in coords[k])
                if stream == STREAM_ARROW:
                    target = tuple(int(c) for c in targets[k]) if inside[k] else None
                    yield Mark(tk, site, stream, target, 0.0, bool(solid[k]))
                else:
                    yield Mark(tk, site, stream, None, float(uniforms[k]))
            t = float(times[-1])


def build_schedule(g: Geometry, p: RateParams, horizon: float, seed: int) -> EventSchedule:
    if horizon <= 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    if p.mu < p.nu:
        raise RateInvalid(f"the coupling needs mu >= nu, got mu={p.mu}, nu={p.nu}")
    if p.omega_max < p.omega_min:
        raise RateInvalid("omega_max < omega_min")
    return EventSchedule(geometry=g, params=p, horizon=horizon, seed=seed)


# ─── Coupled run ──────────────────────────────────────────────────────────────


@dataclass
class CoupledState:
    chi: Configuration
    eta: Configuration
    xi: Configuration
    clock: float = 0.0

    def processes(self) -> tuple[Configuration, Configuration, Configuration]:
        return self.chi, self.eta, self.xi

    def ordered(self) -> bool:
        return bool(
            np.all(self.chi.state >= self.eta.state) and np.all(self.eta.state >= self.xi.state)
        )


class CoupledSample(NamedTuple):
    t: float
    chi: tuple[float, float]
    eta: tuple[float, float]
    xi: tuple[float, float]


@dataclass
class CoupledRun:
    samples: list[CoupledSample]
    final: CoupledState
    events: int = 0
    effective: int = 0


def _sample(state: CoupledState, t: float) -> CoupledSample:
    return CoupledSample(t, state.chi.densities(), state.eta.densities(), state.xi.densities())


def _mark_label(mark: Mark) -> str:
    if mark.stream != STREAM_ARROW:
        return STREAM_NAMES[mark.stream]
    return "solid" if mark.solid else "dashed"


Role = Literal["chi", "eta", "xi"]


def apply_mark(mark: Mark, c: Configuration, role: Role, p: RateParams) -> bool:
    """Apply one mark to one process; True if the configuration changed.

    ``role`` picks the semantics: "chi" also reads What marks, "xi" ignores
    dashed arrows.
    """
    x = mark.site
    s = c.state[x]
    if mark.stream == STREAM_V:
        if s != 0:
            c.apply_flip(x, 0)
            return True
    elif mark.stream == STREAM_U or mark.stream == STREAM_W:
        if s == 1:
            c.apply_flip(x, 0 if mark.stream == STREAM_U else 2)
            return True
    elif mark.stream == STREAM_WHAT:
        spread = p.omega_max - p.omega_min
        if role == "chi" and s == 1 and spread > 0:
            g = c.geometry
            grass = c.grass_count(x) / g.window_volume(g.kappa_range)
            if mark.u < (p.omega_of(grass) - p.omega_min) / spread:
                c.apply_flip(x, 2)
                return True
    else:
        y = mark.target
        if y is not None and (mark.solid or role != "xi") and s == 2 and c.state[y] == 0:
            c.apply_flip(y, 1)
            return True
    return False


def run_ordered_pair(
    s: EventSchedule, upper: Configuration, lower: Configuration, role: Role
) -> int:
    """Run two copies of one model on the same marks; returns the number of order violations.

    Both configurations are mutated in place.
    """
    if not np.all(upper.state >= lower.state):
        raise ValueError("upper must dominate lower initially")
    violations = 0
    for mark in s:
        changed = apply_mark(mark, upper, role, s.params)
        changed |= apply_mark(mark, lower, role, s.params)
        if changed:
            x = mark.target if mark.target is not None else mark.site
            if upper.state[x] < lower.state[x]:
                violations += 1
    return violations


def _check_site(state: CoupledState, x: Site, mark: Mark) -> None:
    c, e, k = state.chi.state[x], state.eta.state[x], state.xi.state[x]
    if not c >= e >= k:
        logger.error("domination failed at %s after %s: chi=%d eta=%d xi=%d", x, mark, c, e, k)
        raise CouplingViolation(
            f"chi >= eta >= xi failed at site {x}, t={mark.time:.6g}: ({c}, {e}, {k})"
        )


def run_coupled(
    s: EventSchedule,
    init: CoupledState,
    *,
    sample_every: float | None = None,
    observer: Callable[[Mark, CoupledState], None] | None = None,
    event_log: TextIO | None = None,
    check: bool = True,
) -> CoupledRun:
    """Drive chi, eta and xi from the marks of ``s``.

    ``init`` is mutated in place and returned as ``final``. ``observer`` sees
    every mark before it is applied; ``event_log`` receives one JSON line per
    mark that changed at least one process.
    """
    if not init.ordered():
        raise ValueError("initial configurations must satisfy chi >= eta >= xi")
    g = s.geometry
    if np.any(init.xi.state) and (g.boxes is None or not g.periodic):
        raise GeometryInvalid("a nonzero truncated process needs small boxes on the torus")

    p = s.params
    chi, eta, xi = init.processes()
    samples: list[CoupledSample] = []
    next_sample = 0.0
    run = CoupledRun(samples=samples, final=init)

    for mark in s:
        while sample_every is not None and next_sample <= mark.time:
            samples.append(_sample(init, next_sample))
            next_sample += sample_every
        if observer is not None:
            observer(mark, init)
        run.events += 1
        x = mark.site
        touched = mark.target if mark.target is not None else x
        pre = (int(chi.state[touched]), int(eta.state[touched]), int(xi.state[touched]))
        changed = False
        for c, role in ((chi, "chi"), (eta, "eta"), (xi, "xi")):
            changed |= apply_mark(mark, c, role, p)

        if changed:
            run.effective += 1
            if check:
                _check_site(init, touched, mark)
            if event_log is not None:
                post = (int(chi.state[touched]), int(eta.state[touched]), int(xi.state[touched]))
                event_log.write(
                    json.dumps(
                        {
                            "t": mark.time,
                            "site": list(x),
                            "target": list(mark.target) if mark.target else None,
                            "stream": STREAM_NAMES[mark.stream],
                            "mark": _mark_label(mark),
                            "pre": list(pre),
                            "post": list(post),
                        }
                    )
                    + "\n"
                )
        init.clock = mark.time

    while sample_every is not None and next_sample <= s.horizon + 1e-12:
        samples.append(_sample(init, next_sample))
        next_sample += sample_every
    init.clock = s.horizon
    return run


# ─── Direct Gillespie path ────────────────────────────────────────────────────

ModelName = Literal["StaverLevin", "Krone", "Truncated", "TruncatedStaverLevin"]

_KIND_ALIASES: dict[str, ModelKind] = {
    "StaverLevin": "staver_levin",
    "Krone": "krone",
    "Truncated": "truncated",
    "TruncatedStaverLevin": "truncated_staver_levin",
}


def normalize_kind(kind: str) -> ModelKind:
    if kind in _KIND_ALIASES:
        return _KIND_ALIASES[kind]
    if kind in _KIND_ALIASES.values():
        return kind  # type: ignore[return-value]
    raise ValueError(f"unknown model kind '{kind}'")


class SiteRates:
    """Vectorised per-site total rates and 1 -> 2 rates for one model kind."""

    def __init__(self, kind: ModelKind, config: Configuration, p: RateParams) -> None:
        self.kind = kind
        self.config = config
        self.p = p
        g = config.geometry
        self.vol_L = g.window_volume(g.L)
        self.vol_k = g.window_volume(g.kappa_range)
        self.truncated = kind in ("truncated", "truncated_staver_levin")
        if self.truncated:
            boxes = g.require_boxes()
            idx = np.meshgrid(*([boxes.site_box] * g.d), indexing="ij")
            self.site_box = np.ravel_multi_index(tuple(i.ravel() for i in idx), boxes.shape)
            self.kappa_nbhd = boxes.neighborhood_size(config.kappa_box_radius)
            reach = g.L if kind == "truncated" else max(g.L, g.kappa_range)
            self.reach = reach + 2 * boxes.ell
        else:
            self.reach = g.L if kind == "krone" else max(g.L, g.kappa_range)

    def growth(self, flat: npt.NDArray[np.intp]) -> npt.NDArray[np.float64]:
        c, p = self.config, self.p
        if self.kind == "staver_levin":
            grass = (self.vol_k - c.nz_kappa.ravel()[flat]) / self.vol_k
            return np.asarray(p.omega_of(grass), dtype=float)
        if self.kind == "truncated_staver_levin":
            if self.kappa_nbhd == 0:
                return np.asarray(p.omega_of(np.ones(flat.shape)), dtype=float)
            nz = c.box_nz_kappa.ravel()[self.site_box[flat]]
            return np.asarray(p.omega_of((self.kappa_nbhd - nz) / self.kappa_nbhd), dtype=float)
        return np.full(flat.shape, p.omega_min)

    def births(self, flat: npt.NDArray[np.intp]) -> npt.NDArray[np.float64]:
        c = self.config
        if self.truncated:
            n2 = c.box_n2_nbhd.ravel()[self.site_box[flat]]
        else:
            n2 = c.window2.ravel()[flat]
        return self.p.beta * n2 / self.vol_L

    def __call__(self, flat: npt.NDArray[np.intp]) -> npt.NDArray[np.float64]:
        states = self.config.state.ravel()[flat]
        out = np.zeros(flat.shape, dtype=np.float64)
        zero = states == 0
        one = states == 1
        if zero.any():
            out[zero] = self.births(flat[zero])
        if one.any():
            out[one] = self.p.mu + self.growth(flat[one])
        out[states == 2] = self.p.nu
        return out


@dataclass
class ModelRun:
    """Density samples (and optionally box counts) of a single-model run."""

    times: list[float] = field(default_factory=list)
    densities: list[tuple[float, float]] = field(default_factory=list)
    box_counts: list[npt.NDArray[np.int32]] = field(default_factory=list)
    final: Configuration | None = None
    events: int = 0
    end_time: float = 0.0
    stopped_at: float | None = None
    extinct_at: float | None = None

    @property
    def extinct(self) -> bool:
        return self.extinct_at is not None


def run_model(
    kind: str,
    g: Geometry,
    p: RateParams,
    init: Configuration,
    horizon: float,
    seed: int | np.random.Generator,
    *,
    sample_every: float | None = None,
    record_boxes: bool = False,
    stop_at_box_mass: int | None = None,
    observer: Callable[[float, Configuration], None] | None = None,
) -> ModelRun:
    """Rejection-free continuous-time simulation of one model.

    Site totals live in a :class:`RateTree`; after a flip only the sites
    within the flip's reach are re-rated. ``init`` is copied, never mutated.
    ``stop_at_box_mass`` ends the run the first time a small box holds that
    many nonzero sites; ``observer`` is called at t=0 and after every event.
    """
    model = normalize_kind(kind)
    if init.geometry != g:
        raise GeometryInvalid("initial configuration was built on a different geometry")
    rng = as_generator(seed)
    config = init.copy()
    rates = SiteRates(model, config, p)
    all_sites = np.arange(g.n_sites)
    tree = RateTree(rates(all_sites))
    run = ModelRun(final=config)
    boxes = config.boxes
    if (stop_at_box_mass is not None or record_boxes) and boxes is None:
        raise GeometryInvalid("box bookkeeping needs small boxes on the torus")

    def sample(t: float) -> None:
        run.times.append(t)
        run.densities.append(config.densities())
        if record_boxes:
            run.box_counts.append(config.box_n1 + config.box_n2)

    t = 0.0
    next_sample = 0.0
    if observer is not None:
        observer(t, config)
    start_mass = 0 if boxes is None else int((config.box_n1 + config.box_n2).max())
    if stop_at_box_mass is not None and start_mass >= stop_at_box_mass:
        run.stopped_at = 0.0
        if sample_every is not None:
            sample(0.0)
        run.end_time = 0.0
        return run

    while True:
        total = tree.total
        if config.n_nonzero == 0 and run.extinct_at is None:
            run.extinct_at = t
        if total <= 0.0:
            break
        dt = rng.exponential(1.0 / total)
        if t + dt > horizon:
            break
        t += dt
        while sample_every is not None and next_sample < t:
            sample(next_sample)
            next_sample += sample_every
        i = tree.sample(float(rng.random()))
        x = tuple(int(c) for c in np.unravel_index(i, g.shape))
        old = int(config.state[x])
        if old == 0:
            new = 1
        elif old == 2:
            new = 0
        else:
            grow = float(rates.growth(np.array([i]))[0])
            new = 2 if rng.random() * (p.mu + grow) < grow else 0
        config.apply_flip(x, new)
        run.events += 1

        window = g.window_index(x, rates.reach)
        flat = np.ravel_multi_index(np.broadcast_arrays(*window), g.shape).ravel()
        tree.update(flat, rates(flat))

        if observer is not None:
            observer(t, config)
        if stop_at_box_mass is not None and new != 0 and old == 0:
            assert boxes is not None
            b = boxes.box_of(x)
            if config.box_n1[b] + config.box_n2[b] >= stop_at_box_mass:
                run.stopped_at = t
                break

    end = t if run.stopped_at is not None else horizon
    while sample_every is not None and next_sample <= end + 1e-12:
        sample(next_sample)
        next_sample += sample_every
    if config.n_nonzero == 0 and run.extinct_at is None:
        run.extinct_at = t
    run.end_time = end
    return run


# ─── Exact generator (slow path) ──────────────────────────────────────────────


def exact_transitions(
    kind: str, config: Configuration, p: RateParams
) -> list[tuple[Site, int, float]]:
    """Every (site, new state, rate) of the generator, by direct enumeration.

    Independent of the maintained counts: windows are recounted site by site
    and truncated neighborhoods come from the box sets.
    """
    model = normalize_kind(kind)
    g = config.geometry
    vol_L = g.window_volume(g.L)
    vol_k = g.window_volume(g.kappa_range)
    out: list[tuple[Site, int, float]] = []
    for flat in range(g.n_sites):
        x = tuple(int(c) for c in np.unravel_index(flat, g.shape))
        s = int(config.state[x])
        if s == 2:
            out.append((x, 0, p.nu))
            continue
        if s == 0:
            if model in ("truncated", "truncated_staver_levin"):
                n2 = sum(1 for y in truncated_neighborhood(g, x) if config.state[y] == 2)
            else:
                n2 = brute_force_count(config.state, x, 2, g.L, g.periodic)
            if n2:
                out.append((x, 1, p.beta * n2 / vol_L))
            continue
        if model == "staver_levin":
            grass = brute_force_count(config.state, x, 0, g.kappa_range, g.periodic) / vol_k
            grow = float(p.omega_of(grass))
        elif model == "truncated_staver_levin":
            boxes = g.require_boxes()
            radius = boxes.radius_for(g.kappa_range)
            sites = [
                y
                for b in boxes.neighbor_boxes(boxes.box_of(x), radius)
                for y in boxes.box_sites(b)
            ] if radius >= 0 else []
            grass = (
                sum(1 for y in sites if config.state[y] == 0) / len(sites) if sites else 1.0
            )
            grow = float(p.omega_of(grass))
        else:
            grow = p.omega_min
        if p.mu > 0:
            out.append((x, 0, p.mu))
        if grow > 0:
            out.append((x, 2, grow))
    return out
