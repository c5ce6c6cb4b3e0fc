"""Wet boxes: small boxes whose nonzero density has reached a0."""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence

import numpy as np

from ..engine import ModelRun
from ..lattice import Site


def detect_wet_box(
    trajectory: ModelRun,
    a0: float,
    box_volume: int,
    region: Iterable[Sequence[int]] | None = None,
    time_window: tuple[float, float] | None = None,
) -> tuple[Site, float] | None:
    """First sampled (box, time) inside the window with n1 + n2 >= a0 * |box|.

    ``trajectory`` must have been recorded with box counts. Boxes are scanned
    in index order at each time, so ties go to the smallest index.
    """
    if not trajectory.box_counts:
        raise ValueError("trajectory carries no box counts; run with record_boxes=True")
    lo, hi = time_window if time_window is not None else (-math.inf, math.inf)
    threshold = a0 * box_volume
    allowed = None if region is None else {tuple(int(a) for a in b) for b in region}
    for t, counts in zip(trajectory.times, trajectory.box_counts, strict=True):
        if t < lo or t > hi:
            continue
        for box in zip(*np.nonzero(counts >= threshold), strict=True):
            key = tuple(int(a) for a in box)
            if allowed is None or key in allowed:
                return key, float(t)
    return None


def boxes_within(center: Sequence[int], radius: int, boxes_per_axis: int) -> list[Site]:
    """Box indices within sup-norm box distance ``radius`` of ``center`` on the torus."""
    axes = [
        sorted({(c + k) % boxes_per_axis for k in range(-radius, radius + 1)}) for c in center
    ]
    out: list[Site] = [()]
    for axis in axes:
        out = [b + (a,) for b in out for a in axis]
    return out


def wet_region_scale(L: int, a: float, alpha: float, d: int) -> float:
    """Side scale K = L^(1 + 2a/3) of the space-time block, for 0 < a < alpha/2 - d/4."""
    upper = alpha / 2 - d / 4
    if not 0 < a < upper:
        raise ValueError(f"a={a} must lie in (0, alpha/2 - d/4) = (0, {upper:.6g})")
    return float(L ** (1 + 2 * a / 3))
