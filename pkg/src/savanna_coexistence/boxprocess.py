"""The box chain: the truncated process seen through its small-box counts.

Births of the truncated process from x reach exactly the boxes within box
radius R of x's box, and every site of such a box is reached at the same
rate. The per-box pairs (n1, n2) therefore form a Markov chain of their own:

==========  ======================================================
transition  rate in box a
==========  ======================================================
(-1, 0)     mu * n1
(0, -1)     nu * n2
(-1, +1)    omega * n1
(+1, 0)     n0 * sum over neighbor boxes b of beta * n2(b) / (2L+1)^d
==========  ======================================================

with n0 = |box| - n1 - n2 and omega the base growth rate. The birth rate
keeps the site-level normalisation (2L+1)^d. :func:`lumpability_discrepancies`
checks the table against the site generator by enumerating every
configuration of a tiny torus.
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from collections.abc import Iterable
from dataclasses import dataclass, field
from itertools import product

import numpy as np
import numpy.typing as npt

from .lattice import BoxGeometry, Configuration, Geometry, Site
from .models import RateParams
from .seeding import as_generator

logger = logging.getLogger(__name__)

Delta = tuple[int, int]
DEATH_1: Delta = (-1, 0)
DEATH_2: Delta = (0, -1)
GROWTH: Delta = (-1, 1)
BIRTH: Delta = (1, 0)
FAMILIES: tuple[Delta, ...] = (DEATH_1, DEATH_2, GROWTH, BIRTH)


@dataclass(frozen=True)
class BoxTransition:
    box: Site
    delta: Delta


@dataclass
class BoxChainState:
    """Per-box sapling and tree counts."""

    boxes: BoxGeometry
    n1: npt.NDArray[np.int64]
    n2: npt.NDArray[np.int64]

    def __post_init__(self) -> None:
        self.n1 = np.asarray(self.n1, dtype=np.int64).reshape(self.boxes.shape)
        self.n2 = np.asarray(self.n2, dtype=np.int64).reshape(self.boxes.shape)
        if self.n1.min(initial=0) < 0 or self.n2.min(initial=0) < 0:
            raise ValueError("box counts must be nonnegative")
        if (self.n1 + self.n2).max(initial=0) > self.boxes.box_volume:
            raise ValueError(f"a box holds more than {self.boxes.box_volume} sites")

    @classmethod
    def empty(cls, boxes: BoxGeometry) -> BoxChainState:
        zeros = np.zeros(boxes.shape, dtype=np.int64)
        return cls(boxes, zeros, zeros.copy())

    @property
    def n0(self) -> npt.NDArray[np.int64]:
        return self.boxes.box_volume - self.n1 - self.n2

    @property
    def mass(self) -> int:
        return int(self.n1.sum() + self.n2.sum())

    def key(self) -> tuple[int, ...]:
        return tuple(int(v) for v in np.concatenate([self.n1.ravel(), self.n2.ravel()]))

    def copy(self) -> BoxChainState:
        return BoxChainState(self.boxes, self.n1.copy(), self.n2.copy())

    def reflected(self) -> BoxChainState:
        """Image under box index a -> -a on every axis."""
        n1 = self.n1
        n2 = self.n2
        for axis in range(self.boxes.d):
            order = (-np.arange(self.boxes.boxes_per_axis)) % self.boxes.boxes_per_axis
            n1 = np.take(n1, order, axis=axis)
            n2 = np.take(n2, order, axis=axis)
        return BoxChainState(self.boxes, n1, n2)


def _box_geometry(g: Geometry | BoxGeometry) -> BoxGeometry:
    return g.require_boxes() if isinstance(g, Geometry) else g


def lump(xi: Configuration) -> BoxChainState:
    boxes = xi.geometry.require_boxes()
    return BoxChainState(boxes, xi.box_n1.copy(), xi.box_n2.copy())


def lump_state(state: npt.ArrayLike, boxes: BoxGeometry) -> BoxChainState:
    """Per-box counts of a raw site array laid out on ``boxes``."""
    arr = np.asarray(state).reshape((boxes.side,) * boxes.d)
    z = BoxChainState.empty(boxes)
    for x in np.ndindex(*arr.shape):
        b = boxes.box_of(x)
        if arr[x] == 1:
            z.n1[b] += 1
        elif arr[x] == 2:
            z.n2[b] += 1
    return z


def _neighbor_n2(z: BoxChainState) -> npt.NDArray[np.float64]:
    boxes = z.boxes
    out = np.zeros(boxes.shape, dtype=np.float64)
    for box in np.ndindex(*boxes.shape):
        out[box] = z.n2[boxes.neighbor_index(box)].sum()
    return out


def box_chain_rates(
    z: BoxChainState, g: Geometry | BoxGeometry, p: RateParams
) -> list[tuple[BoxTransition, float]]:
    """Every transition of the box chain with a positive rate."""
    boxes = _box_geometry(g)
    births = p.beta * _neighbor_n2(z) / boxes.window_volume
    out: list[tuple[BoxTransition, float]] = []
    for box in np.ndindex(*boxes.shape):
        n1, n2, n0 = int(z.n1[box]), int(z.n2[box]), int(z.n0[box])
        rates = (p.mu * n1, p.nu * n2, p.omega_min * n1, n0 * float(births[box]))
        for delta, rate in zip(FAMILIES, rates, strict=True):
            if rate > 0:
                out.append((BoxTransition(tuple(int(a) for a in box), delta), rate))
    return out


def _rate_array(z: BoxChainState, p: RateParams) -> npt.NDArray[np.float64]:
    births = p.beta * _neighbor_n2(z) / z.boxes.window_volume
    return np.stack(
        [
            (p.mu * z.n1).ravel(),
            (p.nu * z.n2).ravel(),
            (p.omega_min * z.n1).ravel(),
            (z.n0 * births).ravel(),
        ],
        axis=1,
    ).astype(np.float64)


@dataclass
class BoxRun:
    times: list[float] = field(default_factory=list)
    totals: list[tuple[int, int]] = field(default_factory=list)
    final: BoxChainState | None = None
    events: int = 0


def simulate_box_chain(
    z0: BoxChainState,
    g: Geometry | BoxGeometry,
    p: RateParams,
    horizon: float,
    seed: int | np.random.Generator,
    *,
    sample_every: float | None = None,
) -> BoxRun:
    """Exact continuous-time simulation of the box chain; ``z0`` is not mutated."""
    boxes = _box_geometry(g)
    rng = as_generator(seed)
    z = z0.copy()
    run = BoxRun(final=z)
    t = 0.0
    next_sample = 0.0

    def sample(at: float) -> None:
        run.times.append(at)
        run.totals.append((int(z.n1.sum()), int(z.n2.sum())))

    while True:
        rates = _rate_array(z, p)
        total = float(rates.sum())
        if total <= 0:
            break
        dt = rng.exponential(1.0 / total)
        if t + dt > horizon:
            break
        t += dt
        while sample_every is not None and next_sample < t:
            sample(next_sample)
            next_sample += sample_every
        flat = np.cumsum(rates.ravel())
        k = int(np.searchsorted(flat, rng.random() * total, side="right"))
        k = min(k, flat.size - 1)
        box_flat, family = divmod(k, len(FAMILIES))
        box = np.unravel_index(box_flat, boxes.shape)
        d1, d2 = FAMILIES[family]
        z.n1[box] += d1
        z.n2[box] += d2
        run.events += 1
    while sample_every is not None and next_sample <= horizon + 1e-12:
        sample(next_sample)
        next_sample += sample_every
    return run


# ─── Lumpability oracle ───────────────────────────────────────────────────────


def xi_transitions(
    state: npt.ArrayLike, boxes: BoxGeometry, p: RateParams
) -> list[tuple[Site, int, float]]:
    """Site generator of the truncated process on a bare box tiling."""
    arr = np.asarray(state).reshape((boxes.side,) * boxes.d)
    out: list[tuple[Site, int, float]] = []
    for x in np.ndindex(*arr.shape):
        s = int(arr[x])
        if s == 2:
            out.append((x, 0, p.nu))
        elif s == 1:
            out.append((x, 0, p.mu))
            out.append((x, 2, p.omega_min))
        else:
            reach = [y for b in boxes.neighbor_boxes(boxes.box_of(x)) for y in boxes.box_sites(b)]
            n2 = sum(1 for y in reach if arr[y] == 2)
            out.append((x, 1, p.beta * n2 / boxes.window_volume))
    return [t for t in out if t[2] > 0]


_SITE_DELTA: dict[tuple[int, int], Delta] = {
    (1, 0): DEATH_1,
    (2, 0): DEATH_2,
    (1, 2): GROWTH,
    (0, 1): BIRTH,
}


def lumped_rates(
    state: npt.ArrayLike, boxes: BoxGeometry, p: RateParams
) -> dict[BoxTransition, float]:
    """Site rates of one configuration summed per box transition."""
    arr = np.asarray(state).reshape((boxes.side,) * boxes.d)
    acc: dict[BoxTransition, float] = defaultdict(float)
    for x, new, rate in xi_transitions(arr, boxes, p):
        delta = _SITE_DELTA[(int(arr[x]), new)]
        acc[BoxTransition(boxes.box_of(x), delta)] += rate
    return dict(acc)


def all_states(boxes: BoxGeometry) -> Iterable[npt.NDArray[np.int8]]:
    n = boxes.side**boxes.d
    for values in product((0, 1, 2), repeat=n):
        yield np.array(values, dtype=np.int8).reshape((boxes.side,) * boxes.d)


def lumpability_discrepancies(
    boxes: BoxGeometry, p: RateParams, *, rel_tol: float = 1e-12
) -> list[str]:
    """Compare the box-chain table with the lumped site generator on every configuration.

    Returns one line per mismatch; an empty list certifies the table.
    """
    problems: list[str] = []
    checked = 0
    for arr in all_states(boxes):
        z = lump_state(arr, boxes)
        expected = dict(box_chain_rates(z, boxes, p))
        actual = lumped_rates(arr, boxes, p)
        for key in set(expected) | set(actual):
            a, e = actual.get(key, 0.0), expected.get(key, 0.0)
            if not math.isclose(a, e, rel_tol=rel_tol, abs_tol=1e-15):
                problems.append(
                    f"state {arr.ravel().tolist()} {key.box} {key.delta}: sites {a!r} vs box {e!r}"
                )
        checked += 1
    logger.info("lumpability: %d configurations, %d discrepancies", checked, len(problems))
    return problems


def reflection_discrepancies(z: BoxChainState, p: RateParams) -> list[str]:
    """Rates out of the reflected state must be the reflected rates."""
    boxes = z.boxes
    direct = {
        BoxTransition(boxes.reflect_box(t.box), t.delta): r
        for t, r in box_chain_rates(z, boxes, p)
    }
    mirrored = dict(box_chain_rates(z.reflected(), boxes, p))
    return [
        f"{key.box} {key.delta}: {direct.get(key, 0.0)!r} vs {mirrored.get(key, 0.0)!r}"
        for key in set(direct) | set(mirrored)
        if not math.isclose(direct.get(key, 0.0), mirrored.get(key, 0.0), rel_tol=1e-12)
    ]
