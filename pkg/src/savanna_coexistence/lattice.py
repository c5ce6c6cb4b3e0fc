"""Finite lattice state with incrementally maintained window and small-box counts.

Sites hold 0 (grass), 1 (sapling) or 2 (tree) in a dense ``int8`` array of
shape ``(side,) * d``. Two window counts are stored per site:

* ``window2``: number of 2's in ``x + [-L, L]^d`` (birth pressure),
* ``nz_kappa``: number of nonzero sites in ``x + [-K, K]^d`` with
  ``K = floor(kappa * L)``; the grass count is the window volume minus it.

Small boxes ``B_a = 2*ell*a + (-ell, ell]^d`` tile the torus, with
``ell = floor(epsilon0 * L)``. Their per-box (n1, n2) counts drive the
truncated process, whose births from x only reach the union of boxes whose
every point lies within L of every point of x's box. Per axis that is a box
index distance of at most ``R = (L + 1) // (2*ell) - 1``.

A flip updates every count that can see the flipped site by adding +-1 on a
window slice, so each event costs O((2L+1)^d) numpy work instead of a
recount. :meth:`Configuration.recount` rebuilds everything from scratch and is
the oracle for that bookkeeping.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterator, Sequence
from dataclasses import dataclass
from functools import cached_property, lru_cache
from itertools import product

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .config import BoundaryRule
from .errors import GeometryInvalid

logger = logging.getLogger(__name__)

Site = tuple[int, ...]
IntArray = npt.NDArray[np.int32]


def floor_range(scale: float, L: int) -> int:
    """``floor(scale * L)``, immune to products like 0.29 * 100 = 28.999999999999996."""
    return math.floor(round(scale * L, 9))


class Geometry(BaseModel):
    """Dimension, interaction ranges and the finite domain."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    d: int = Field(default=1, ge=1, le=3)
    L: int = Field(..., ge=1, description="Interaction range in sites")
    kappa: float = Field(default=1.0, gt=0, description="Grass window is kappa*L")
    epsilon0: float | None = Field(
        default=None,
        gt=0,
        lt=0.25,
        description="Small-box scale; omit when no coarse-graining is needed",
    )
    side: int = Field(..., ge=1, description="Side length of the domain in sites")
    boundary: BoundaryRule = "torus"

    @model_validator(mode="after")
    def _consistent(self) -> Geometry:
        if self.side < 4 * self.L:
            raise ValueError(f"side {self.side} must be >= 4L = {4 * self.L}")
        if self.side < 2 * self.kappa_range + 1:
            raise ValueError(
                f"side {self.side} cannot hold the grass window of radius {self.kappa_range}"
            )
        if self.epsilon0 is not None:
            if self.ell < 1:
                raise ValueError(
                    f"floor(epsilon0*L) = floor({self.epsilon0}*{self.L}) is 0; "
                    "small boxes need ell >= 1"
                )
            if self.side % (2 * self.ell):
                raise ValueError(f"side {self.side} must be divisible by 2*ell = {2 * self.ell}")
        return self

    @property
    def ell(self) -> int:
        return 0 if self.epsilon0 is None else floor_range(self.epsilon0, self.L)

    @property
    def kappa_range(self) -> int:
        return floor_range(self.kappa, self.L)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.side,) * self.d

    @property
    def n_sites(self) -> int:
        return self.side**self.d

    @property
    def periodic(self) -> bool:
        return self.boundary == "torus"

    def window_volume(self, radius: int) -> int:
        return (2 * radius + 1) ** self.d

    @property
    def boxes(self) -> BoxGeometry | None:
        if self.epsilon0 is None:
            return None
        return BoxGeometry(
            d=self.d, L=self.L, ell=self.ell, boxes_per_axis=self.side // (2 * self.ell)
        )

    def require_boxes(self) -> BoxGeometry:
        boxes = self.boxes
        if boxes is None:
            raise GeometryInvalid("this operation needs small boxes: set geometry.epsilon0")
        if not self.periodic:
            raise GeometryInvalid("truncated neighborhoods are only defined on the torus")
        return boxes

    def wrap(self, x: Sequence[int]) -> Site:
        return tuple(int(c) % self.side for c in x)

    def centered(self, x: Sequence[int]) -> Site:
        """Coordinates in [-side/2, side/2), origin at index 0."""
        half = self.side // 2
        return tuple((int(c) + half) % self.side - half for c in x)

    def norm(self, x: Sequence[int]) -> int:
        """Sup norm of the torus-centered coordinates."""
        return max(abs(c) for c in self.centered(x))

    @property
    def norm_grid(self) -> IntArray:
        """Sup norm of every site, shaped like the lattice."""
        return _norm_grid(self.side, self.d)

    def window_index(self, x: Sequence[int], radius: int) -> tuple[npt.NDArray[np.intp], ...]:
        """Open-mesh index of ``x + [-radius, radius]^d`` (clipped off-torus)."""
        axes = []
        for c in x:
            idx = np.arange(c - radius, c + radius + 1)
            if self.periodic:
                idx %= self.side
            else:
                idx = idx[(idx >= 0) & (idx < self.side)]
            axes.append(idx)
        return np.ix_(*axes)


@lru_cache(maxsize=32)
def _norm_grid(side: int, d: int) -> IntArray:
    half = side // 2
    axis = np.abs((np.arange(side) + half) % side - half).astype(np.int32)
    grid = axis
    for _ in range(d - 1):
        grid = np.maximum.outer(grid, axis)
    grid = np.asarray(grid, dtype=np.int32)
    grid.setflags(write=False)
    return grid


@dataclass(frozen=True)
class BoxGeometry:
    """Small-box tiling of a torus, independent of the site-level windows."""

    d: int
    L: int
    ell: int
    boxes_per_axis: int

    @property
    def side(self) -> int:
        return self.boxes_per_axis * 2 * self.ell

    @property
    def box_volume(self) -> int:
        return (2 * self.ell) ** self.d

    @property
    def window_volume(self) -> int:
        return (2 * self.L + 1) ** self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.boxes_per_axis,) * self.d

    def radius_for(self, reach: int) -> int:
        """Box-index radius of the truncated neighborhood at range ``reach`` (-1 if empty)."""
        return (reach + 1) // (2 * self.ell) - 1

    @property
    def radius(self) -> int:
        return self.radius_for(self.L)

    @cached_property
    def site_box(self) -> npt.NDArray[np.intp]:
        """Box index along one axis for every site coordinate."""
        return ((np.arange(self.side) + self.ell - 1) // (2 * self.ell)) % self.boxes_per_axis

    def box_of(self, x: Sequence[int]) -> Site:
        return tuple(int(self.site_box[int(c) % self.side]) for c in x)

    def box_axis_sites(self, a: int) -> npt.NDArray[np.intp]:
        lo = 2 * self.ell * a - self.ell + 1
        return np.arange(lo, lo + 2 * self.ell) % self.side

    def box_sites(self, box: Sequence[int]) -> Iterator[Site]:
        for site in product(*(self.box_axis_sites(a) for a in box)):
            yield tuple(int(c) for c in site)

    def neighbor_axis(self, a: int, radius: int | None = None) -> npt.NDArray[np.intp]:
        r = self.radius if radius is None else radius
        if r < 0:
            return np.empty(0, dtype=np.intp)
        return np.unique((a + np.arange(-r, r + 1)) % self.boxes_per_axis)

    def neighbor_index(
        self, box: Sequence[int], radius: int | None = None
    ) -> tuple[npt.NDArray[np.intp], ...]:
        return np.ix_(*(self.neighbor_axis(a, radius) for a in box))

    def neighbor_boxes(self, box: Sequence[int], radius: int | None = None) -> list[Site]:
        return [
            tuple(int(c) for c in b)
            for b in product(*(self.neighbor_axis(a, radius) for a in box))
        ]

    def neighborhood_size(self, radius: int | None = None) -> int:
        r = self.radius if radius is None else radius
        if r < 0:
            return 0
        per_axis = min(2 * r + 1, self.boxes_per_axis)
        return (per_axis * 2 * self.ell) ** self.d

    def reflect_box(self, box: Sequence[int]) -> Site:
        """Box image under the per-axis reflection z -> 1 - z, which fixes the tiling."""
        return tuple((-a) % self.boxes_per_axis for a in box)


def reflect_site(x: Sequence[int], side: int) -> Site:
    return tuple((1 - int(c)) % side for c in x)


# ─── Counting helpers ─────────────────────────────────────────────────────────


def window_counts(mask: npt.ArrayLike, radius: int, periodic: bool) -> IntArray:
    """Per-site count of ``mask`` over ``x + [-radius, radius]^d`` by separable prefix sums."""
    out = np.asarray(mask, dtype=np.int32)
    for axis in range(out.ndim):
        n = out.shape[axis]
        pad = [(0, 0)] * out.ndim
        pad[axis] = (radius, radius)
        padded = np.pad(out, pad, mode="wrap" if periodic else "constant")
        csum = np.cumsum(padded, axis=axis, dtype=np.int64)
        zero_shape = list(csum.shape)
        zero_shape[axis] = 1
        csum = np.concatenate([np.zeros(zero_shape, dtype=np.int64), csum], axis=axis)
        hi = np.take(csum, np.arange(2 * radius + 1, 2 * radius + 1 + n), axis=axis)
        lo = np.take(csum, np.arange(0, n), axis=axis)
        out = (hi - lo).astype(np.int32)
    return out


def brute_force_count(
    state: npt.NDArray[np.int8], x: Sequence[int], value: int, radius: int, periodic: bool
) -> int:
    """Count sites equal to ``value`` in ``x``'s window by direct enumeration."""
    side = state.shape[0]
    total = 0
    for offset in product(range(-radius, radius + 1), repeat=state.ndim):
        y = [c + o for c, o in zip(x, offset, strict=True)]
        if periodic:
            y = [c % side for c in y]
        elif any(c < 0 or c >= side for c in y):
            if value == 0:
                total += 1
            continue
        if state[tuple(y)] == value:
            total += 1
    return total


# ─── Configuration ────────────────────────────────────────────────────────────


class Configuration:
    """Mutable lattice state plus every count the simulators query per event.

    Single owner: engines mutate it in place through :meth:`apply_flip` only.
    """

    def __init__(self, geometry: Geometry, state: npt.ArrayLike | None = None) -> None:
        self.geometry = geometry
        if state is None:
            arr = np.zeros(geometry.shape, dtype=np.int8)
        else:
            arr = np.array(state, dtype=np.int8, copy=True).reshape(geometry.shape)
            if arr.size and (arr.min() < 0 or arr.max() > 2):
                raise ValueError("site states must be 0, 1 or 2")
        self.state = arr
        self.boxes = geometry.boxes if geometry.periodic else None
        self._build_counts()

    def _build_counts(self) -> None:
        g = self.geometry
        self.window2 = window_counts(self.state == 2, g.L, g.periodic)
        self.nz_kappa = window_counts(self.state != 0, g.kappa_range, g.periodic)
        self.n_nonzero = int(np.count_nonzero(self.state))
        if self.boxes is None:
            return
        b = self.boxes
        nb = b.boxes_per_axis
        idx = np.meshgrid(*([b.site_box] * g.d), indexing="ij")
        flat_box = np.ravel_multi_index(tuple(i.ravel() for i in idx), b.shape)
        flat_state = self.state.ravel()
        self.box_n1 = (
            np.bincount(flat_box, weights=flat_state == 1, minlength=nb**g.d)
            .astype(np.int32)
            .reshape(b.shape)
        )
        self.box_n2 = (
            np.bincount(flat_box, weights=flat_state == 2, minlength=nb**g.d)
            .astype(np.int32)
            .reshape(b.shape)
        )
        self.box_n2_nbhd = self._box_window(self.box_n2, b.radius)
        self.kappa_box_radius = b.radius_for(g.kappa_range)
        self.box_nz_kappa = self._box_window(self.box_n1 + self.box_n2, self.kappa_box_radius)

    def _box_window(self, counts: IntArray, radius: int) -> IntArray:
        assert self.boxes is not None
        out = np.zeros_like(counts)
        if radius < 0:
            return out
        if 2 * radius + 1 <= self.boxes.boxes_per_axis:
            return window_counts(counts, radius, periodic=True)
        # The window wraps onto itself: sum each box's deduplicated neighbors.
        for box in np.ndindex(*counts.shape):
            out[box] = counts[self.boxes.neighbor_index(box, radius)].sum()
        return out

    @classmethod
    def filled(cls, geometry: Geometry, value: int) -> Configuration:
        return cls(geometry, np.full(geometry.shape, value, dtype=np.int8))

    def copy(self) -> Configuration:
        other = object.__new__(Configuration)
        other.__dict__.update(
            {k: (v.copy() if isinstance(v, np.ndarray) else v) for k, v in self.__dict__.items()}
        )
        return other

    def __getitem__(self, x: Sequence[int]) -> int:
        return int(self.state[self.geometry.wrap(x)])

    # ─── Queries ──────────────────────────────────────────────────────────

    def grass_count(self, x: Sequence[int]) -> int:
        """Number of 0's in the kappa*L window of ``x``, read from the maintained count."""
        g = self.geometry
        return g.window_volume(g.kappa_range) - int(self.nz_kappa[g.wrap(x)])

    def box_counts(self, box: Sequence[int]) -> tuple[int, int]:
        if self.boxes is None:
            raise GeometryInvalid("configuration has no small boxes")
        b = tuple(int(a) % self.boxes.boxes_per_axis for a in box)
        return int(self.box_n1[b]), int(self.box_n2[b])

    def truncated_births(self, x: Sequence[int]) -> int:
        """N2 over the truncated neighborhood of ``x``."""
        assert self.boxes is not None
        return int(self.box_n2_nbhd[self.boxes.box_of(x)])

    def densities(self) -> tuple[float, float]:
        n = self.geometry.n_sites
        return (
            float(np.count_nonzero(self.state == 1)) / n,
            float(np.count_nonzero(self.state == 2)) / n,
        )

    # ─── Mutation ─────────────────────────────────────────────────────────

    def apply_flip(self, x: Sequence[int], new_state: int) -> None:
        g = self.geometry
        site = g.wrap(x)
        old = int(self.state[site])
        if new_state == old:
            raise ValueError(f"site {site} already holds {old}")
        self.state[site] = new_state

        delta2 = (new_state == 2) - (old == 2)
        delta_nz = (new_state != 0) - (old != 0)
        if delta2:
            self.window2[g.window_index(site, g.L)] += delta2
        if delta_nz:
            self.nz_kappa[g.window_index(site, g.kappa_range)] += delta_nz
            self.n_nonzero += delta_nz
        if self.boxes is None:
            return
        box = self.boxes.box_of(site)
        self.box_n1[box] += (new_state == 1) - (old == 1)
        self.box_n2[box] += delta2
        if delta2:
            self.box_n2_nbhd[self.boxes.neighbor_index(box)] += delta2
        if delta_nz and self.kappa_box_radius >= 0:
            self.box_nz_kappa[self.boxes.neighbor_index(box, self.kappa_box_radius)] += delta_nz

    # ─── Oracles ──────────────────────────────────────────────────────────

    def recount(self) -> Configuration:
        return Configuration(self.geometry, self.state)

    def count_mismatches(self) -> dict[str, int]:
        """Per maintained array, how many entries differ from a fresh recount."""
        fresh = self.recount()
        names = ["window2", "nz_kappa"]
        if self.boxes is not None:
            names += ["box_n1", "box_n2", "box_n2_nbhd", "box_nz_kappa"]
        out = {n: int(np.count_nonzero(getattr(self, n) != getattr(fresh, n))) for n in names}
        out["n_nonzero"] = int(self.n_nonzero != fresh.n_nonzero)
        return out


def local_fraction(c: Configuration, x: Sequence[int], type_: int, radius: int) -> float:
    """Fraction of sites of ``type_`` in ``x + [-radius, radius]^d``.

    The two maintained windows (2's at range L, 0's at range kappa*L) answer
    from their counts; anything else is recounted.
    """
    g = c.geometry
    site = g.wrap(x)
    vol = g.window_volume(radius)
    if type_ == 2 and radius == g.L:
        return int(c.window2[site]) / vol
    if type_ == 0 and radius == g.kappa_range:
        return c.grass_count(site) / vol
    return brute_force_count(c.state, site, type_, radius, g.periodic) / vol


def truncated_neighborhood(g: Geometry | BoxGeometry, x: Sequence[int]) -> set[Site]:
    """Sites reached by births from ``x`` in the truncated process."""
    boxes = g.require_boxes() if isinstance(g, Geometry) else g
    sites: set[Site] = set()
    for box in boxes.neighbor_boxes(boxes.box_of(x)):
        sites.update(boxes.box_sites(box))
    return sites


def box_counts(c: Configuration, box: Sequence[int]) -> tuple[int, int]:
    return c.box_counts(box)


def apply_flip(c: Configuration, x: Sequence[int], new_state: int) -> Configuration:
    c.apply_flip(x, new_state)
    return c
