"""3-sided reporting and top-k selection over a PrioritySearchTree."""
from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass
from typing import List

from .blockstore import SCRATCH, BlockStore, Segment
from .model import NEG_INF, POS_INF, ThreeSidedQuery, TopKQuery, x_bounds, ykey

_BOTTOM = (NEG_INF, NEG_INF)
_TOP = (POS_INF, POS_INF)


def report_3sided(tree, q: ThreeSidedQuery) -> list:
    xlo, xhi = x_bounds(q.x1, q.x2)
    return report_keys(tree, xlo, xhi, (q.y, NEG_INF))


def report_keys(tree, xlo, xhi, ylo) -> list:
    """All live points with ``xlo <= p <= xhi`` and ``ykey(p) >= ylo``.

    Visits the two search paths plus every fully covered child whose
    minimum lies in the query; buffered updates on the way are pushed
    into the visited children so the child structures are exact there.
    """
    r = tree.root

    def hit(p):
        return xlo <= p <= xhi and (p[1], p[0]) >= ylo

    res = [p for p in (r.P.load() if r.P.n else []) if hit(p)]
    if r.leaf:
        return res
    visited = []
    stack = [(r, None, None)]
    while stack:
        v, lo, hi = stack.pop()
        visited.append(v)
        if v.leaf:
            continue
        tree._touch(v)
        I = v.I.load() if v.I.n else []
        D = v.D.load() if v.D.n else []
        keep_I, keep_D = I, D
        for i, c in enumerate(v.children):
            clo, chi = v.child_range(i, lo, hi)
            on_path = (clo is None or clo <= xlo) and (chi is None or xlo < chi) or \
                      (clo is None or clo <= xhi) and (chi is None or xhi < chi)
            inside = clo is not None and clo >= xlo and chi is not None and chi <= xhi \
                and v.cmin[i] is not None and v.cmin[i] >= ylo
            if not (on_path or inside):
                continue
            ui = [p for p in keep_I if v.child_index(p) == i]
            ud = [p for p in keep_D if v.child_index(p) == i]
            if ui or ud:
                gone = set(ui)
                gone.update(ud)
                keep_I = [p for p in keep_I if p not in gone]
                keep_D = [p for p in keep_D if p not in gone]
                tree._deliver(c, ud, ui)
            stack.append((c, clo, chi))
        if len(keep_I) != len(I) or len(keep_D) != len(D):
            v.I.save(keep_I)
            v.D.save(keep_D)
            tree._save_header(v)
        excl = set(keep_I)
        excl.update(keep_D)
        res.extend(p for p in keep_I if hit(p))
        res.extend(p for p in v.cs.report_keys(xlo, xhi, ylo) if p not in excl)
    visited.sort(key=lambda w: -w.height)
    tree._underflow.update(w for w in visited if not w.leaf)
    tree._settle(visited)
    return res


@dataclass
class Threshold:
    """Outcome of the sample-tree selection for a top-k query."""

    k_bar: int
    y_bar: tuple  # a y-key; (-inf, -inf) when fewer than k_bar candidates exist
    t: int
    expanded: int


def select_threshold(tree, xlo, xhi, k: int) -> Threshold:
    """Pick a y-key that has at least k (and not too many) points above it in range.

    The candidates form an implicit heap-ordered tree: a chain of ``t``
    sentinels (one per node on the two search paths) whose right branches
    are the sample chains of those nodes; every chain entry standing for
    the minimum of a fully covered child hangs that child's own chain.
    Chains are materialised lazily during a best-first walk that stops at
    the ``k_bar``-th largest candidate.
    """
    B = tree.B
    path = []
    seen = set()
    for key in (xlo, xhi):
        v, lo, hi = tree.root, None, None
        while True:
            if id(v) not in seen:
                seen.add(id(v))
                path.append((v, lo, hi))
            if v.leaf:
                break
            tree._touch(v)
            i = v.child_index(key)
            lo, hi = v.child_range(i, lo, hi)
            v = v.children[i]
    t = len(path)
    k_bar = 7 * t + -(-12 * k // B)

    def chain(v, lo, hi, cap):
        if v.leaf:
            return []
        tree._touch(v)
        ent = [(s, None) for s in v.cs.sample_keys(xlo, xhi).values]
        for i, c in enumerate(v.children):
            clo, chi = v.child_range(i, lo, hi)
            if clo is not None and clo >= xlo and chi is not None and chi <= xhi \
                    and 2 * v.ccnt[i] >= B and v.cmin[i] is not None:
                ent.append((v.cmin[i], (c, clo, chi)))
        ent.sort(key=lambda e: e[0], reverse=True)
        if cap is not None:
            ent = [(min(val, cap), ref) for val, ref in ent]
        return ent

    tick = itertools.count()
    heap: list = []

    def neg(key):
        return (-key[0], -key[1])

    # items: (neg value, tiebreak, kind, payload)
    if t:
        heapq.heappush(heap, (neg(_TOP), next(tick), "s", 0))
    popped = 0
    expanded = 0
    while heap:
        nv, _, kind, payload = heapq.heappop(heap)
        popped += 1
        val = (-nv[0], -nv[1])
        if popped == k_bar:
            return Threshold(k_bar, val, t, expanded)
        if kind == "s":
            i = payload
            if i + 1 < t:
                heapq.heappush(heap, (neg(_TOP), next(tick), "s", i + 1))
            v, lo, hi = path[i]
            ch = chain(v, lo, hi, None)
            expanded += 1
            if ch:
                heapq.heappush(heap, (neg(ch[0][0]), next(tick), "c", (ch, 0)))
        else:
            ch, j = payload
            if j + 1 < len(ch):
                heapq.heappush(heap, (neg(ch[j + 1][0]), next(tick), "c", (ch, j + 1)))
            ref = ch[j][1]
            if ref is not None:
                sub = chain(ref[0], ref[1], ref[2], val)
                expanded += 1
                if sub:
                    heapq.heappush(heap, (neg(sub[0][0]), next(tick), "c", (sub, 0)))
    return Threshold(k_bar, _BOTTOM, t, expanded)


@dataclass
class TopKInfo:
    threshold: Threshold
    reported: int  # size of the 3-sided answer before final selection


def top_k(tree, q: TopKQuery) -> list:
    if q.k == 0:
        tree.last_topk = None
        return []
    xlo, xhi = x_bounds(q.x1, q.x2)
    thr = select_threshold(tree, xlo, xhi, q.k)
    A = report_keys(tree, xlo, xhi, thr.y_bar)
    tree.last_topk = TopKInfo(thr, len(A))
    if len(A) < q.k and thr.y_bar != _BOTTOM:
        # the threshold was too high; never expected, counted for the tests
        tree.topk_fallbacks += 1
        A = report_keys(tree, xlo, xhi, _BOTTOM)
    if len(A) <= q.k:
        return sorted(A, key=ykey, reverse=True)
    return sorted(external_select_topk(tree.store, A, q.k), key=ykey, reverse=True)


def external_select_topk(store: BlockStore, points: List[tuple], k: int) -> List[tuple]:
    """The k highest points by y-key, selected through the store in O(n/B) IOs.

    Repeatedly partitions around the median of the block medians, keeping
    only the side that still contains the k-th element.
    """
    B = store.B
    room = max(1, store.capacity - 2) * B
    seg = Segment(store, SCRATCH, points)
    out: list = []
    need = k
    try:
        while True:
            if seg.n <= room:
                pts = seg.load()
                out.extend(heapq.nlargest(need, pts, key=ykey))
                return out
            medians = []
            for bid in seg.ids:
                blk = sorted(map(ykey, store.read(bid)))
                medians.append(blk[len(blk) // 2])
            medians.sort()
            pivot = medians[len(medians) // 2]
            hi_pts, lo_pts = [], []
            for bid in seg.ids:
                for p in store.read(bid):
                    (hi_pts if ykey(p) > pivot else lo_pts).append(p)
            seg.free()
            if len(hi_pts) >= need:
                seg = Segment(store, SCRATCH, hi_pts)
            else:
                out.extend(hi_pts)
                need -= len(hi_pts)
                seg = Segment(store, SCRATCH, lo_pts)
            if need == 0:
                return out
    finally:
        seg.free()
