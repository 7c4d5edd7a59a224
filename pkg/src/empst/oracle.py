"""Brute-force in-memory reference for differential testing."""
from __future__ import annotations

import heapq
from typing import Iterable, List

from sortedcontainers import SortedList

from .model import NEG_INF, ykey


class OracleSet:
    """Plain point set: insert replaces, delete removes if present."""

    def __init__(self, points: Iterable = ()):
        self._pts = SortedList((p[0], p[1]) for p in points)

    def __len__(self) -> int:
        return len(self._pts)

    def __contains__(self, p) -> bool:
        return (p[0], p[1]) in self._pts

    def __iter__(self):
        return iter(self._pts)

    def copy(self) -> "OracleSet":
        o = OracleSet()
        o._pts = self._pts.copy()
        return o

    def insert(self, p) -> None:
        p = (p[0], p[1])
        if p not in self._pts:
            self._pts.add(p)

    def delete(self, p) -> None:
        self._pts.discard((p[0], p[1]))

    def _range(self, x1, x2):
        return self._pts.irange((x1, NEG_INF), (x2, float("inf")))

    def report(self, x1, x2, y=NEG_INF) -> List[tuple]:
        return [p for p in self._range(x1, x2) if p[1] >= y]

    def topk(self, x1, x2, k) -> List[tuple]:
        if k <= 0:
            return []
        return heapq.nlargest(k, self._range(x1, x2), key=ykey)

    def count(self, x1, x2, ylo_key=(NEG_INF, NEG_INF)) -> int:
        return sum(1 for p in self._range(x1, x2) if ykey(p) >= ylo_key)

    # alternative names
    o_insert = insert
    o_delete = delete
    o_report = report
    o_topk = topk


def sweep_fused_blocks(points: List[tuple], B: int):
    """Independent reference for the fused blocks of a child structure.

    ``points`` must be x-sorted.  Simulates the upward sweep point by point,
    recounting every adjacent pair from scratch; returns a list of
    ``(i, j, min_key, frozenset(points))`` with 1-based base-block indices.
    """
    base = [points[i:i + B] for i in range(0, len(points), B)]
    # active: list of [i, j, pointlist]
    active = [[t + 1, t + 1, list(blk)] for t, blk in enumerate(base)]
    where = {}
    for t, blk in enumerate(base):
        for p in blk:
            where[p] = t + 1
    out = []
    for p in sorted(points, key=ykey):
        kp = ykey(p)
        b = where[p]
        pos = next(n for n, a in enumerate(active) if a[0] <= b <= a[1])
        above = [sum(1 for q in a[2] if ykey(q) >= kp) for a in active]
        for left in (pos - 1, pos):
            if left < 0 or left + 1 >= len(active):
                continue
            if above[left] >= 1 and above[left + 1] >= 1 and above[left] + above[left + 1] == B:
                a, c = active[left], active[left + 1]
                pts = [q for q in a[2] + c[2] if ykey(q) >= kp]
                active[left:left + 2] = [[a[0], c[1], pts]]
                out.append((a[0], c[1], kp, frozenset(pts)))
                break
    return out
