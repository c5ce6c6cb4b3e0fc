"""Moving a population one small box over in one time unit.

The trial runs Krone's process for one time unit on the graphical
representation and reads off, from the marks alone:

* G0: occupied sites of the origin box with no death mark in [0, 1] and a
  growth mark in [0, 1/2];
* S: sites of the target box with no death mark in [0, 1] that receive an
  arrow from some site of G0 during (1/2, 1).

Given |H00| occupied origin sites, |G0| ~ Binomial(|H00|, e^-mu (1 - e^-omega/2))
and, conditional on |G0|, |S| ~ Binomial(|box|, e^-mu (1 - exp(-beta |G0| / (2 |B0|))))
with |B0| = (2L + 1)^d.
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from collections.abc import Sequence

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, Field
from scipy.stats import binom, chisquare

from ..config import GOF_LEVEL, STREAM_ARROW, STREAM_U, STREAM_V, STREAM_W
from ..engine import apply_mark, build_schedule
from ..lattice import Configuration, Geometry, Site
from ..models import RateParams
from ..seeding import rng_for

logger = logging.getLogger(__name__)


class MovingTrial(BaseModel):
    H00: int = 0
    G00: int = 0
    G0: int = 0
    S: int = 0
    Hv1: int = 0
    success: bool = False
    direction: list[int] = Field(default_factory=list)


def direction_vectors(d: int) -> list[tuple[int, ...]]:
    """0 and every +-e_k."""
    out = [(0,) * d]
    for k in range(d):
        for s in (1, -1):
            out.append(tuple(s if i == k else 0 for i in range(d)))
    return out


def _box_set(g: Geometry, box: Sequence[int]) -> set[Site]:
    return set(g.require_boxes().box_sites(box))


def moving_particle_trial(
    g: Geometry,
    p: RateParams,
    v: Sequence[int],
    init: Configuration,
    seed: int,
    *,
    delta: float = 0.0,
) -> MovingTrial:
    """One unit of Krone's process from ``init``; ``init`` itself is not mutated."""
    return _trial(g, p, v, init, seed, delta)[0]


def _trial(
    g: Geometry,
    p: RateParams,
    v: Sequence[int],
    init: Configuration,
    seed: int,
    delta: float,
) -> tuple[MovingTrial, Configuration]:
    boxes = g.require_boxes()
    if len(v) != g.d or sum(abs(c) for c in v) > 1:
        raise ValueError(f"direction must be 0 or +-e_k in {g.d} dimensions, got {tuple(v)}")
    origin = _box_set(g, (0,) * g.d)
    target_box = tuple(int(c) % boxes.boxes_per_axis for c in v)
    target = _box_set(g, target_box)
    eta = init.copy()
    h00 = {x for x in origin if init.state[x] != 0}

    died: set[Site] = set()
    grew_early: set[Site] = set()
    arrows: dict[Site, set[Site]] = defaultdict(set)
    for mark in build_schedule(g, p, 1.0, seed):
        x = mark.site
        if mark.stream in (STREAM_V, STREAM_U):
            died.add(x)
        elif mark.stream == STREAM_W and mark.time <= 0.5:
            grew_early.add(x)
        elif mark.stream == STREAM_ARROW and mark.time > 0.5 and x in origin:
            if mark.target in target:
                arrows[mark.target].add(x)
        apply_mark(mark, eta, "eta", p)

    g00 = h00 - died
    g0 = g00 & grew_early
    gv = target - died
    s = {y for y in gv if arrows.get(y, set()) & g0}
    hv1 = sum(1 for y in target if eta.state[y] != 0)
    trial = MovingTrial(
        H00=len(h00),
        G00=len(g00),
        G0=len(g0),
        S=len(s),
        Hv1=hv1,
        success=hv1 >= delta * len(h00),
        direction=list(v),
    )
    return trial, eta


def g0_probability(p: RateParams) -> float:
    return math.exp(-p.mu) * (1 - math.exp(-p.omega_min / 2))


def s_probability(p: RateParams, g0: int, g: Geometry) -> float:
    return math.exp(-p.mu) * (1 - math.exp(-p.beta * g0 / (2 * g.window_volume(g.L))))


def empirical_delta(trials: Sequence[MovingTrial], success_rate: float = 0.99) -> float:
    """Largest delta that at least ``success_rate`` of the trials reach."""
    ratios = np.array([t.Hv1 / t.H00 for t in trials if t.H00 > 0])
    if ratios.size == 0:
        return 0.0
    return float(np.quantile(ratios, 1 - success_rate, method="lower"))


def binomial_gof(
    samples: npt.ArrayLike, n: int, prob: float, *, min_expected: float = 5.0
) -> float:
    """Chi-square p-value of ``samples`` against Binomial(n, prob).

    Adjacent outcomes are pooled from the low end until each bin expects at
    least ``min_expected`` counts; the remainder joins the last bin.
    """
    data = np.asarray(samples, dtype=np.int64)
    total = data.size
    pmf = binom.pmf(np.arange(n + 1), n, prob)
    observed = np.bincount(data, minlength=n + 1)[: n + 1].astype(float)
    expected = pmf * total
    bins_o: list[float] = []
    bins_e: list[float] = []
    acc_o = acc_e = 0.0
    for o, e in zip(observed, expected, strict=True):
        acc_o += o
        acc_e += e
        if acc_e >= min_expected:
            bins_o.append(acc_o)
            bins_e.append(acc_e)
            acc_o = acc_e = 0.0
    if bins_e:
        bins_o[-1] += acc_o
        bins_e[-1] += acc_e
    if len(bins_e) < 2:
        return 1.0
    scale = sum(bins_o) / sum(bins_e)
    return float(chisquare(bins_o, np.asarray(bins_e) * scale).pvalue)


def stratified_s_gof(
    trials: Sequence[MovingTrial], g: Geometry, p: RateParams, *, min_count: int = 50
) -> tuple[float, int]:
    """Bonferroni-adjusted p-value of |S| given |G0| over strata with enough trials."""
    box = g.require_boxes().box_volume
    strata: dict[int, list[int]] = defaultdict(list)
    for t in trials:
        strata[t.G0].append(t.S)
    pvalues = [
        binomial_gof(samples, box, s_probability(p, g0, g))
        for g0, samples in strata.items()
        if len(samples) >= min_count
    ]
    if not pvalues:
        return 1.0, 0
    return min(1.0, min(pvalues) * len(pvalues)), len(pvalues)


def gof_passes(pvalue: float) -> bool:
    return pvalue >= GOF_LEVEL


def shift_box(c: Configuration, v: Sequence[int]) -> Configuration:
    """Keep only the sites of box v and translate them onto the origin box."""
    g = c.geometry
    boxes = g.require_boxes()
    box = tuple(int(a) % boxes.boxes_per_axis for a in v)
    state = np.zeros(g.shape, dtype=np.int8)
    for y in boxes.box_sites(box):
        x = tuple((yc - 2 * boxes.ell * vc) % g.side for yc, vc in zip(y, v, strict=True))
        state[x] = c.state[y]
    return Configuration(g, state)


def moving_particles_walk(
    g: Geometry,
    p: RateParams,
    v: Sequence[int],
    init: Configuration,
    steps: int,
    seed: int,
    *,
    delta: float = 0.0,
    grid_index: int = 0,
) -> list[MovingTrial]:
    """Repeat the one-box move ``steps`` times, restarting each step from the survivors in box v."""
    trials: list[MovingTrial] = []
    current = init
    for k in range(steps):
        step_seed = int(rng_for(seed, grid_index, k).integers(2**63))
        trial, final = _trial(g, p, v, current, step_seed, delta)
        trials.append(trial)
        current = shift_box(final, v)
        if trial.Hv1 == 0:
            break
    return trials

