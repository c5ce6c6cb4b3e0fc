"""Binary sum tree over per-site rates for rejection-free event selection.

Leaves hold the total rate of each site; inner nodes hold the sum of their
children, so the total rate is the root and picking a site with probability
proportional to its rate is a walk down ``log2(n)`` levels. Batched updates
rewrite a set of leaves and refresh only their ancestors, one vectorised
level at a time.
"""

from __future__ import annotations

import numpy as np
import numpy.typing as npt


class RateTree:
    """Sum tree over ``n`` nonnegative rates stored in a flat array of size ``2 * cap``."""

    def __init__(self, rates: npt.ArrayLike) -> None:
        values = np.asarray(rates, dtype=np.float64).ravel()
        if values.size and values.min() < 0:
            raise ValueError("rates must be nonnegative")
        self.n = values.size
        cap = 1
        while cap < max(self.n, 1):
            cap *= 2
        self.cap = cap
        self.tree = np.zeros(2 * cap, dtype=np.float64)
        self.tree[cap : cap + self.n] = values
        for level_start in self._levels():
            idx = np.arange(level_start, 2 * level_start)
            self.tree[idx] = self.tree[2 * idx] + self.tree[2 * idx + 1]

    def _levels(self) -> list[int]:
        starts = []
        s = self.cap // 2
        while s >= 1:
            starts.append(s)
            s //= 2
        return starts

    @property
    def total(self) -> float:
        return float(self.tree[1])

    def __getitem__(self, i: int) -> float:
        return float(self.tree[self.cap + i])

    def leaves(self) -> npt.NDArray[np.float64]:
        return self.tree[self.cap : self.cap + self.n]

    def update(self, indices: npt.ArrayLike, values: npt.ArrayLike) -> None:
        """Set leaves ``indices`` to ``values`` and refresh their ancestors."""
        idx = np.asarray(indices, dtype=np.intp).ravel() + self.cap
        self.tree[idx] = np.asarray(values, dtype=np.float64).ravel()
        nodes = np.unique(idx // 2)
        while nodes.size and nodes[0] >= 1:
            self.tree[nodes] = self.tree[2 * nodes] + self.tree[2 * nodes + 1]
            if nodes[0] == 1:
                break
            nodes = np.unique(nodes // 2)

    def sample(self, u: float) -> int:
        """Leaf index whose cumulative rate interval contains ``u * total``."""
        target = u * self.tree[1]
        node = 1
        tree = self.tree
        while node < self.cap:
            left = tree[2 * node]
            if target < left:
                node = 2 * node
            else:
                target -= left
                node = 2 * node + 1
        leaf = node - self.cap
        # Rounding can walk into a zero-rate tail leaf; step back to a live one.
        while leaf > 0 and (leaf >= self.n or tree[self.cap + leaf] <= 0.0):
            leaf -= 1
        return leaf
