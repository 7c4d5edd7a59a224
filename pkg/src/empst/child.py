"""Small dynamic structure over at most ``4 * B * Delta`` points.

Points are kept in a static list of blocks: ``l`` base blocks partitioning
the points by x, plus at most ``l - 1`` fused blocks produced by an upward
sweep (a fused block holds exactly the ``B`` highest points of a run of
adjacent base blocks).  Updates are buffered in two one-block buffers and
applied by a full rebuild when a buffer overflows.  A per-block sample of
y-values supports constant-IO approximate rank queries.
"""
from __future__ import annotations

import heapq
import itertools
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from typing import List, NamedTuple, Sequence

from .blockstore import CBUF, LBLOCK, META, BlockStore, Segment
from .model import NEG_INF, POS_INF, Config, ThreeSidedQuery, x_bounds, ykey


class CapacityExceeded(ValueError):
    pass


class BatchTooLarge(ValueError):
    pass


class CatalogEntry(NamedTuple):
    """Metadata for one block; ``i``/``j`` are 1-based base-block indices."""

    kind: str  # "base" or "fused"
    i: int
    j: int
    min_x: tuple
    max_x: tuple
    min_y: tuple  # creation height; (-inf, -inf) for base blocks
    dies: tuple  # height at which a fused block replaced this one
    block: int


@dataclass
class SampleSequence:
    """Decreasing y-keys plus the slack ``alpha`` they are guaranteed for."""

    values: List[tuple]
    alpha: int

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)


_BOTTOM = (NEG_INF, NEG_INF)
_TOP = (POS_INF, POS_INF)


class _Run:
    __slots__ = ("i", "j", "pts", "alive", "left", "right", "entry")

    def __init__(self, i, j, pts):
        self.i, self.j, self.pts = i, j, pts
        self.alive = True
        self.left = self.right = None
        self.entry = None


class ChildStructure:
    def __init__(self, store: BlockStore, cfg: Config):
        self.store = store
        self.cfg = cfg
        self.catalog: List[CatalogEntry] = []
        self.nbase = 0
        self.samples: List[List[tuple]] = []
        self.meta = Segment(store, META)  # host header records, then the catalog
        self.head: list = []
        self.smeta = Segment(store, META)  # per-block samples
        self.ibuf = Segment(store, CBUF)
        self.dbuf = Segment(store, CBUF)
        self.size_L = 0
        self.rebuilds = 0

    @classmethod
    def build(cls, points: Sequence, store: BlockStore, cfg: Config) -> "ChildStructure":
        cs = cls(store, cfg)
        cs._build(list(points))
        return cs

    # -- construction ----------------------------------------------------
    def _build(self, pts: list) -> None:
        cfg, B = self.cfg, self.cfg.B
        if len(pts) > cfg.child_capacity:
            raise CapacityExceeded(f"{len(pts)} points exceed capacity {cfg.child_capacity}")
        for e in self.catalog:
            self.store.free(e.block)
        self.size_L = len(pts)
        chunks = [pts[s:s + B] for s in range(0, len(pts), B)]
        self.nbase = len(chunks)
        runs = [_Run(t, t, c) for t, c in enumerate(chunks)]
        for a, b in zip(runs, runs[1:]):
            a.right, b.left = b, a
        dies = {}
        fused = []
        events: list = []
        tick = itertools.count()

        def push(a, b, floor):
            union = a.pts + b.pts
            if floor != _BOTTOM:
                union = [p for p in union if ykey(p) >= floor]
            if len(union) < B:
                return
            q = heapq.nlargest(B, map(ykey, union))[-1]
            if not any(ykey(p) >= q for p in a.pts) or not any(ykey(p) >= q for p in b.pts):
                return
            heapq.heappush(events, (q, a.i, next(tick), a, b))

        for a in runs[:-1]:
            push(a, a.right, _BOTTOM)
        while events:
            q, _, _, a, b = heapq.heappop(events)
            if not (a.alive and b.alive and a.right is b):
                continue
            top = sorted((p for p in a.pts + b.pts if ykey(p) >= q))
            f = _Run(a.i, b.j, top)
            a.alive = b.alive = False
            dies[id(a)] = dies[id(b)] = q
            f.left, f.right = a.left, b.right
            if f.left:
                f.left.right = f
                push(f.left, f, q)
            if f.right:
                f.right.left = f
                push(f, f.right, q)
            fused.append((f, q))

        catalog = []
        for r in runs:
            bid = self.store.alloc(LBLOCK)
            self.store.write(bid, r.pts)
            catalog.append(CatalogEntry("base", r.i + 1, r.i + 1, r.pts[0], r.pts[-1],
                                        _BOTTOM, dies.get(id(r), _TOP), bid))
        for f, q in fused:
            bid = self.store.alloc(LBLOCK)
            self.store.write(bid, f.pts)
            catalog.append(CatalogEntry("fused", f.i + 1, f.j + 1, runs[f.i].pts[0],
                                        runs[f.j].pts[-1], q, dies.get(id(f), _TOP), bid))
        self.catalog = catalog
        self.samples = [self._block_samples(c) for c in chunks]
        self._save_meta()

    def _block_samples(self, blk: list) -> List[tuple]:
        keys = sorted(map(ykey, blk), reverse=True)
        out = []
        for i in range(1, self.cfg.samples_per_block + 1):
            r = self.cfg.ceil_eps(i)
            if r > len(keys):
                break
            out.append(keys[r - 1])
        return out

    def _save_meta(self) -> None:
        self.meta.save(self.head + [tuple(e) for e in self.catalog])
        self.smeta.save([(t, k) for t, s in enumerate(self.samples) for k in s])

    def set_head(self, records: list) -> None:
        """Store the owner's header records in front of the catalog."""
        self.head = list(records)
        self.meta.save(self.head + [tuple(e) for e in self.catalog])

    # -- updates ---------------------------------------------------------
    def insert_batch(self, ps: Sequence) -> None:
        self._update(ps, insert=True)

    def delete_batch(self, ps: Sequence) -> None:
        self._update(ps, insert=False)

    def _update(self, ps, insert: bool) -> None:
        B = self.cfg.B
        if not ps:
            return
        if len(ps) > B:
            raise BatchTooLarge(f"batch of {len(ps)} exceeds B={B}")
        ins = set(self.ibuf.load()) if self.ibuf.n else set()
        dels = set(self.dbuf.load()) if self.dbuf.n else set()
        touched_i = touched_d = False
        for p in ps:
            p = (p[0], p[1])
            if p in ins:
                ins.discard(p)
                touched_i = True
            if p in dels:
                dels.discard(p)
                touched_d = True
            (ins if insert else dels).add(p)
        if len(ins) > B or len(dels) > B:
            self._apply(ins, dels)
            return
        if insert or touched_i:
            self.ibuf.save(sorted(ins))
        if not insert or touched_d:
            self.dbuf.save(sorted(dels))

    def update_many(self, deletes: Sequence = (), inserts: Sequence = ()) -> None:
        """Apply arbitrarily many updates in batches of at most ``B``."""
        B = self.cfg.B
        deletes, inserts = list(deletes), list(inserts)
        for s in range(0, len(deletes), B):
            self.delete_batch(deletes[s:s + B])
        for s in range(0, len(inserts), B):
            self.insert_batch(inserts[s:s + B])

    def _base_points(self) -> list:
        out: list = []
        read = self.store.read
        for e in self.catalog[:self.nbase]:
            out.extend(read(e.block))
        return out

    def _apply(self, ins: set, dels: set) -> None:
        pts = self._base_points()
        gone = ins | dels
        merged = [p for p in pts if p not in gone]
        merged.extend(ins)
        merged.sort()
        self.ibuf.save(())
        self.dbuf.save(())
        self.rebuilds += 1
        self._build(merged)

    # -- queries ---------------------------------------------------------
    def covering(self, xlo, xhi, ylo) -> List[CatalogEntry]:
        """Catalog entries whose blocks hold every point of the query."""
        self.meta.touch()
        out = []
        for e in self.catalog:
            if e.min_y <= ylo < e.dies and e.max_x >= xlo and e.min_x <= xhi:
                out.append(e)
        return out

    def report_keys(self, xlo, xhi, ylo) -> list:
        res = []
        read = self.store.read
        for e in self.covering(xlo, xhi, ylo):
            for p in read(e.block):
                if xlo <= p <= xhi and (p[1], p[0]) >= ylo:
                    res.append(p)
        if self.ibuf.n or self.dbuf.n:
            ins = self.ibuf.load()
            gone = set(ins)
            gone.update(self.dbuf.load())
            res = [p for p in res if p not in gone]
            res.extend(p for p in ins if xlo <= p <= xhi and (p[1], p[0]) >= ylo)
        return res

    def report(self, q: ThreeSidedQuery) -> list:
        xlo, xhi = x_bounds(q.x1, q.x2)
        return self.report_keys(xlo, xhi, (q.y, NEG_INF))

    def sample(self, x1, x2) -> SampleSequence:
        xlo, xhi = x_bounds(x1, x2)
        return self.sample_keys(xlo, xhi)

    def sample_keys(self, xlo, xhi) -> SampleSequence:
        self.meta.touch()
        self.smeta.touch()
        base = self.catalog[:self.nbase]
        mins = [e.min_x for e in base]
        maxs = [e.max_x for e in base]
        first = bisect_left(mins, xlo)  # first block starting at or after xlo
        last = bisect_right(maxs, xhi) - 1  # last block ending at or before xhi
        interior = max(0, last - first + 1)
        cfg = self.cfg
        alpha = max(cfg.alpha, -(-((interior + 1) * cfg.delta + 4 * cfg.B) // cfg.B))
        if interior == 0:
            return SampleSequence([], alpha)
        merged = list(heapq.merge(*self.samples[first:last + 1], reverse=True))
        values = []
        s = 1
        while True:
            r = cfg.ceil_coeps(s + 1)
            if r > len(merged):
                break
            values.append(merged[r - 1])
            s += 1
        return SampleSequence(values, alpha)

    def live_points(self) -> list:
        pts = self._base_points()
        if not (self.ibuf.n or self.dbuf.n):
            return pts
        ins = self.ibuf.load()
        gone = set(ins)
        gone.update(self.dbuf.load())
        pts = [p for p in pts if p not in gone]
        pts.extend(ins)
        pts.sort()
        return pts

    def peek_live(self) -> list:
        """Live points without IO accounting."""
        pts = []
        for e in self.catalog[:self.nbase]:
            pts.extend(self.store.peek(e.block))
        ins = self.ibuf.peek()
        gone = set(ins) | set(self.dbuf.peek())
        pts = [p for p in pts if p not in gone] + ins
        pts.sort()
        return pts

    @property
    def meta_blocks(self) -> int:
        return len(self.meta.ids) + len(self.smeta.ids)

    def free(self) -> None:
        for e in self.catalog:
            self.store.free(e.block)
        self.catalog = []
        self.samples = []
        self.nbase = 0
        self.size_L = 0
        self.meta.free()
        self.smeta.free()
        self.ibuf.free()
        self.dbuf.free()
