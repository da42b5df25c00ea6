"""Balanced binary tree of partial sums for O(log K) weighted sampling.

The tree is stored heap-style in a flat float64 array ``nodes`` of length
``2 * capacity``: the root is ``nodes[1]``, node ``v`` has children ``2v`` and
``2v + 1`` and leaf ``i`` (0-based) lives at ``nodes[capacity + i]``.
``capacity`` is the smallest power of two >= K and padding leaves hold 0.

The module-level ``_tree_*`` functions are numba kernels operating on that
array; :class:`WeightTree` wraps them, and the simulation engine calls them
directly so both paths run the same arithmetic.
"""

from __future__ import annotations

import numpy as np
from numba import njit

__all__ = ["WeightTree", "REBUILD_EVERY", "ROOT_RANGE"]

REBUILD_EVERY = 1 << 16
ROOT_RANGE = (2.0**-64, 2.0**64)


@njit(cache=True)
def _tree_resum(nodes, cap):
    for v in range(cap - 1, 0, -1):
        nodes[v] = nodes[2 * v] + nodes[2 * v + 1]


@njit(cache=True)
def _tree_descend(nodes, cap, u):
    """Return ``(leaf, visited_nodes)`` for the uniform draw ``u`` in [0, 1)."""
    z = nodes[1] * u
    v = 1
    visits = 1
    while v < cap:
        left = nodes[2 * v]
        # Z >= S_left goes right; an empty right subtree can only be reached
        # through accumulated rounding, so stay left then.
        if z < left or nodes[2 * v + 1] <= 0.0:
            v = 2 * v
        else:
            z -= left
            v = 2 * v + 1
        visits += 1
    return v - cap, visits


@njit(cache=True)
def _tree_multiply(nodes, cap, leaf, factor):
    """Scale one leaf and resum its ancestors; returns the number of nodes written."""
    v = cap + leaf
    nodes[v] *= factor
    visits = 1
    v //= 2
    while v >= 1:
        nodes[v] = nodes[2 * v] + nodes[2 * v + 1]
        v //= 2
        visits += 1
    return visits


@njit(cache=True)
def _tree_rebuild(nodes, cap, rescale):
    _tree_resum(nodes, cap)
    if rescale:
        total = nodes[1]
        if total > 0.0:
            for v in range(cap, 2 * cap):
                nodes[v] /= total
            _tree_resum(nodes, cap)


@njit(cache=True)
def _tree_after_update(nodes, cap, count):
    """Drift control after a multiplicative update; returns the new update counter."""
    count += 1
    root = nodes[1]
    if count >= REBUILD_EVERY or root < ROOT_RANGE[0] or root > ROOT_RANGE[1]:
        _tree_rebuild(nodes, cap, True)
        return 0
    return count


def _capacity(K):
    return 1 << max(0, int(K - 1).bit_length())


class WeightTree:
    """Sum tree over ``K`` nonnegative weights.

    >>> tree = WeightTree.build([3.0, 1.0])
    >>> tree.prob(0), tree.sample(0.8)
    (0.75, 1)
    """

    def __init__(self, weights):
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 1 or w.size < 1:
            raise ValueError("weights must be a non-empty vector")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and nonnegative")
        if not np.any(w > 0):
            raise ValueError("at least one weight must be positive")
        self.leaf_count = int(w.size)
        self.capacity = _capacity(self.leaf_count)
        self.nodes = np.zeros(2 * self.capacity, dtype=np.float64)
        self.nodes[self.capacity:self.capacity + self.leaf_count] = w
        _tree_resum(self.nodes, self.capacity)
        self.rounds_since_rebuild = 0
        self.last_visits = 0

    @classmethod
    def build(cls, weights):
        return cls(weights)

    @property
    def depth(self):
        return self.capacity.bit_length() - 1

    @property
    def total(self):
        return float(self.nodes[1])

    @property
    def weights(self):
        """Read-only view of the K real leaves."""
        view = self.nodes[self.capacity:self.capacity + self.leaf_count]
        view = view.view()
        view.flags.writeable = False
        return view

    def _check_index(self, i):
        if not (0 <= i < self.leaf_count):
            raise IndexError(f"expert index {i} out of range for K={self.leaf_count}")

    def multiply_leaf(self, i, factor):
        """Multiply leaf ``i`` by ``factor`` in O(log K) and apply drift control."""
        self._check_index(i)
        if not (np.isfinite(factor) and factor > 0):
            raise ValueError(f"factor must be positive and finite, got {factor!r}")
        self.last_visits = _tree_multiply(self.nodes, self.capacity, int(i), float(factor))
        self.rounds_since_rebuild = _tree_after_update(
            self.nodes, self.capacity, self.rounds_since_rebuild)
        return self

    def sample(self, u):
        """Leaf reached by descending with ``Z = total * u``; ``u`` must lie in [0, 1)."""
        if not (0.0 <= u < 1.0):
            raise ValueError(f"u must lie in [0, 1), got {u!r}")
        leaf, self.last_visits = _tree_descend(self.nodes, self.capacity, float(u))
        return int(leaf)

    def prob(self, i):
        self._check_index(i)
        return float(self.nodes[self.capacity + i] / self.nodes[1])

    def probabilities(self):
        return self.weights / self.nodes[1]

    def rebuild(self, rescale=True):
        """Recompute internal nodes from the leaves, optionally normalising them to sum 1."""
        _tree_rebuild(self.nodes, self.capacity, bool(rescale))
        self.rounds_since_rebuild = 0
        return self

    def check_invariants(self, rtol=1e-9):
        """True when every internal node matches the sum of its children within ``rtol``."""
        n, cap = self.nodes, self.capacity
        if np.any(n[cap + self.leaf_count:] != 0.0) or np.any(n[cap:] < 0):
            return False
        parents = n[1:cap]
        children = n[2:2 * cap:2] + n[3:2 * cap:2]
        return bool(np.all(np.abs(parents - children) <= rtol * np.abs(children)))

    def __repr__(self):
        return f"WeightTree(K={self.leaf_count}, total={self.total:.6g})"
