"""Server aggregation over uncertainty balls.

Two components from different clients belong to the same super-cluster when
their balls intersect; super-clusters are the connected components of that
overlap graph. Components of one client are never compared with each other,
though they can still end up together through other clients' components.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .core import ComponentMessage

Key = tuple[int, int]


class UnionFind:
    """Disjoint sets over 0..n-1 with union by rank and path halving."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, x: int) -> int:
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        return True

    def labels(self) -> list[int]:
        """Dense ids numbered by first appearance of each root."""
        ids: dict[int, int] = {}
        out = []
        for i in range(len(self.parent)):
            out.append(ids.setdefault(self.find(i), len(ids)))
        return out


@dataclass(frozen=True)
class SuperClusterPartition:
    assignment: dict[Key, int]
    count: int

    def groups(self) -> list[list[Key]]:
        out: list[list[Key]] = [[] for _ in range(self.count)]
        for key, sc in sorted(self.assignment.items()):
            out[sc].append(key)
        return out

    def canonical(self) -> frozenset[frozenset[Key]]:
        """Label-free form, for comparing partitions up to id renaming."""
        return frozenset(frozenset(g) for g in self.groups())


def overlap(m1: ComponentMessage, m2: ComponentMessage) -> bool:
    if m1.maximizer.shape != m2.maximizer.shape:
        raise ValueError("messages have different dimensions")
    w = float(np.linalg.norm(m1.maximizer - m2.maximizer))
    return w <= m1.radius + m2.radius


def consensus_point(m1: ComponentMessage, m2: ComponentMessage) -> np.ndarray:
    """A point in both balls: the midpoint when admissible, else the nearest
    admissible point on the segment between the two centres."""
    a, b = m1.maximizer, m2.maximizer
    w = float(np.linalg.norm(b - a))
    if w == 0.0:
        return a.copy()
    lo = 1.0 - m2.radius / w
    hi = m1.radius / w
    t = min(max(0.5, lo), hi)
    return a + t * (b - a)


def _sorted(messages: Iterable[ComponentMessage]) -> list[ComponentMessage]:
    msgs = sorted(messages, key=lambda m: m.key)
    keys = [m.key for m in msgs]
    if len(set(keys)) != len(keys):
        raise ValueError("duplicate (client, component) keys")
    dims = {m.maximizer.shape for m in msgs}
    if len(dims) > 1:
        raise ValueError("messages have different dimensions")
    return msgs


def _pairs_pairwise(msgs: Sequence[ComponentMessage]) -> list[tuple[int, int]]:
    pairs = []
    for i, mi in enumerate(msgs):
        for j in range(i + 1, len(msgs)):
            mj = msgs[j]
            if mi.client_id != mj.client_id and overlap(mi, mj):
                pairs.append((i, j))
    return pairs


def _pairs_kdtree(msgs: Sequence[ComponentMessage]) -> list[tuple[int, int]]:
    if len(msgs) < 2:
        return []
    pts = np.stack([m.maximizer for m in msgs])
    max_r = max(m.radius for m in msgs)
    # No overlapping pair can be farther apart than twice the largest radius;
    # the small inflation guards the inclusive boundary against rounding.
    search = 2.0 * max_r * (1.0 + 1e-9) + 1e-12
    candidates = cKDTree(pts).query_pairs(search, output_type="ndarray")
    pairs = [
        (int(i), int(j))
        for i, j in candidates
        if msgs[i].client_id != msgs[j].client_id and overlap(msgs[i], msgs[j])
    ]
    return sorted(pairs)


def _partition(msgs: Sequence[ComponentMessage], pairs) -> SuperClusterPartition:
    uf = UnionFind(len(msgs))
    for i, j in pairs:
        uf.union(i, j)
    labels = uf.labels()
    assignment = {m.key: labels[i] for i, m in enumerate(msgs)}
    return SuperClusterPartition(assignment, max(labels) + 1 if labels else 0)


def _collaborative(msgs, pairs) -> tuple[dict[Key, np.ndarray], SuperClusterPartition]:
    pool: list[list[np.ndarray]] = [[m.maximizer] for m in msgs]
    for i, j in pairs:
        nu = consensus_point(msgs[i], msgs[j])
        pool[i].append(nu)
        pool[j].append(nu)
    updates = {m.key: np.mean(pool[i], axis=0) for i, m in enumerate(msgs)}
    return updates, _partition(msgs, pairs)


def server_update(messages: Iterable[ComponentMessage]):
    """Collaborative-training aggregation.

    Each component's update is the arithmetic mean of its own maximizer and
    one consensus point per overlap it takes part in. Returns
    ``(updates, partition)`` with updates keyed by (client, component).
    """
    msgs = _sorted(messages)
    return _collaborative(msgs, _pairs_pairwise(msgs))


def server_update_kdtree(messages: Iterable[ComponentMessage]):
    """Same result as ``server_update`` with candidate pairs from a KD-tree."""
    msgs = _sorted(messages)
    return _collaborative(msgs, _pairs_kdtree(msgs))


def final_aggregate(messages: Iterable[ComponentMessage], mode: str = "pairwise"):
    """Final merge: every member of a super-cluster receives the
    sample-count-weighted mean of the members' maximizers."""
    msgs = _sorted(messages)
    pairs = _pairs_kdtree(msgs) if mode == "kdtree" else _pairs_pairwise(msgs)
    part = _partition(msgs, pairs)
    by_key = {m.key: m for m in msgs}
    finals: dict[Key, np.ndarray] = {}
    for group in part.groups():
        if len(group) == 1:
            finals[group[0]] = by_key[group[0]].maximizer.copy()
            continue
        pts = np.stack([by_key[k].maximizer for k in group])
        w = np.array([by_key[k].sample_count for k in group], dtype=np.float64)
        centre = (w @ pts) / w.sum()
        for k in group:
            finals[k] = centre.copy()
    return finals, part


def aggregate(messages, mode: str = "pairwise"):
    if mode == "kdtree":
        return server_update_kdtree(messages)
    if mode == "pairwise":
        return server_update(messages)
    raise ValueError(f"unknown server mode {mode!r}")
