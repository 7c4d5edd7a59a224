"""Buffered external-memory priority search tree.

A B-tree over x (fan-out ``Delta = ceil(B**eps)``) where every node ``v``
holds a point buffer ``P`` (heap ordered on y), and internal nodes hold
insertion/deletion buffers ``I``/``D`` of delayed updates plus a child
structure over the union of the children's point buffers.  Updates enter
at the root and trickle down in batches; high points are pulled up to
refill underflowing point buffers.  A global rebuild every ``N/2``
updates keeps the tree balanced.

All point data lives in the block store; a node object is the in-memory
parse of its header block, which is re-read (``_touch``) whenever an
operation visits the node and rewritten whenever it changes.
"""
from __future__ import annotations

import heapq
import logging
from bisect import bisect_right
from typing import Iterable, List, Optional

from .blockstore import DBUF, IBUF, PBUF, SCRATCH, SUPER, BlockStore, FormatError, Segment, external_sort
from .child import ChildStructure
from .model import NEG_INF, Config, InvalidConfig, validate_config, ykey

log = logging.getLogger(__name__)


class DuplicatePoint(ValueError):
    pass


class _Node:
    __slots__ = ("leaf", "height", "parent", "children", "seps", "cmin", "ccnt",
                 "P", "I", "D", "cs", "dead", "saved")

    def __init__(self, store: BlockStore, leaf: bool, height: int):
        self.leaf = leaf
        self.height = height
        self.parent: Optional[_Node] = None
        self.children: List[_Node] = []
        self.seps: list = []
        self.cmin: list = []
        self.ccnt: List[int] = []
        self.P = Segment(store, PBUF)
        self.I = Segment(store, IBUF)
        self.D = Segment(store, DBUF)
        self.cs: Optional[ChildStructure] = None
        self.dead = False
        self.saved = None  # last header records written

    @property
    def hdr(self) -> Optional[Segment]:
        """Header records share a segment with the child structure's catalog."""
        return self.cs.meta if self.cs is not None else None

    def child_index(self, key) -> int:
        return bisect_right(self.seps, key)

    def child_range(self, i, lo, hi):
        return (self.seps[i - 1] if i else lo, self.seps[i] if i < len(self.seps) else hi)

    def __repr__(self):
        kind = "leaf" if self.leaf else f"node(h={self.height}, deg={len(self.children)})"
        return f"<{kind} P={self.P.n} I={self.I.n} D={self.D.n}>"


def _min_key(pts):
    return min(map(ykey, pts)) if pts else None


class PrioritySearchTree:
    """Dynamic point set supporting 3-sided reporting and top-k queries.

    >>> t = PrioritySearchTree(Config(B=16))
    >>> t.insert((1, 2)); t.insert((3, 4))
    >>> sorted(t.report(0, 5, 3))
    [(3, 4)]
    """

    def __init__(self, cfg: Config, store: Optional[BlockStore] = None):
        self.cfg = validate_config(cfg)
        if cfg.M < 8 * cfg.B:
            raise InvalidConfig(f"memory M={cfg.M} must be at least 8B to keep the root resident")
        self.store = store if store is not None else BlockStore(cfg.B, cfg.M)
        self.B = cfg.B
        self.delta = cfg.delta
        self._underflow: set = set()
        self._oversized: set = set()
        self.root = _Node(self.store, True, 0)
        self._pin_root(True)
        self.n_bar = 0
        self.updates_in_epoch = 0
        self.rebuilds = 0
        self.last_topk = None
        self.topk_fallbacks = 0

    # ------------------------------------------------------------------
    # construction
    @classmethod
    def bulk_construct(cls, points: Iterable, cfg: Config, store: Optional[BlockStore] = None,
                       presorted: Optional[bool] = None) -> "PrioritySearchTree":
        """Build from a point collection; x-sorted input is scanned, anything else sorted externally."""
        t = cls(cfg, store)
        t._pin_root(False)
        t._free_node(t.root)
        t._construct(points, presorted)
        return t

    def _construct(self, points, presorted=None) -> None:
        store, B = self.store, self.B
        pts = [(p[0], p[1]) for p in points]
        if presorted is None:
            presorted = all(a < b for a, b in zip(pts, pts[1:]))
        if presorted:
            for a, b in zip(pts, pts[1:]):
                if not a < b:
                    raise DuplicatePoint(a) if a == b else ValueError("input is not x-sorted")
            store.reads += -(-len(pts) // B)  # one scan of the input file
        else:
            seg = external_sort(store, pts)
            pts = seg.load() if seg.n else []
            seg.free()
            for a, b in zip(pts, pts[1:]):
                if a == b:
                    raise DuplicatePoint(a)
        half = max(1, B // 2)
        if len(pts) <= B:
            leaves = [pts]
        else:
            leaves = [pts[s:s + half] for s in range(0, len(pts), half)]
        # skeleton first; leaf buffers are written when the walk reaches them
        level = []
        chunks = {}
        for chunk in leaves:
            v = _Node(store, True, 0)
            chunks[v] = chunk
            level.append((v, chunk[0] if chunk else None))
        g = max(2, self.delta // 2)
        height = 0
        while len(level) > 1:
            height += 1
            groups = [level[s:s + g] for s in range(0, len(level), g)]
            if len(groups) > 1 and len(groups[-1]) < g and len(groups[-2]) + len(groups[-1]) <= self.delta:
                groups[-2:] = [groups[-2] + groups[-1]]
            nxt = []
            for grp in groups:
                u = _Node(store, False, height)
                for c, _ in grp:
                    c.parent = u
                    u.children.append(c)
                u.seps = [lo for _, lo in grp[1:]]
                u.cmin = [None] * len(grp)
                u.ccnt = [0] * len(grp)
                nxt.append((u, grp[0][1]))
            level = nxt
        self.root = level[0][0]
        # Bottom-up: give every node B/2 points, refilling children on demand;
        # then top-down: top every buffer up to exactly B.  Sibling subtrees
        # are independent, so depth-first order gives the same layout as
        # level order while keeping each subtree's blocks resident.
        below = {}

        def fill_up(v):
            if v.leaf:
                v.P.save(chunks.pop(v))
                self._refresh_entry(v)
                below[v] = 0
                return
            for c in v.children:
                fill_up(c)
            below[v] = sum(c.P.n + below[c] for c in v.children)
            self._bulk_pull(v, half, below)

        def top_up(v):
            if v.leaf:
                return
            if below[v] and v.P.n < B:
                self._bulk_pull(v, B - v.P.n, below)
            for c in v.children:
                top_up(c)
            # children's buffers are final once their own top-up is done
            v.cs = ChildStructure.build(sorted(p for c in v.children for p in c.P.load()),
                                        store, self.cfg)
            self._save_header(v)

        fill_up(self.root)
        top_up(self.root)
        self._pin_root(True)
        self.n_bar = len(pts)
        self.updates_in_epoch = 0

    def _bulk_pull(self, v: _Node, amount: int, below: dict) -> None:
        """Move the ``amount`` highest points of v's children into P_v (construction only)."""
        half = max(1, self.B // 2)
        cand = []
        loaded = {}
        for c in v.children:
            if c.P.n:
                loaded[c] = c.P.load()
                cand.extend(loaded[c])
        if not cand:
            return
        X = heapq.nlargest(amount, cand, key=ykey)
        Xs = set(X)
        for c, pc in loaded.items():
            rest = [p for p in pc if p not in Xs]
            if len(rest) != len(pc):
                c.P.save(rest)
                self._refresh_entry(c)
        v.P.save(sorted(v.P.load() + X) if v.P.n else sorted(X))
        self._refresh_entry(v)
        below[v] -= len(X)
        for c in loaded:
            if not c.leaf and c.P.n < half and below[c]:
                self._bulk_pull(c, half, below)

    def _refresh_entry(self, v: _Node) -> None:
        """Recompute the parent's (min-y, count) entry for v without IO."""
        u = v.parent
        if u is None:
            return
        i = u.children.index(v)
        pts = v.P.peek()
        u.cmin[i] = _min_key(pts)
        u.ccnt[i] = len(pts)

    # ------------------------------------------------------------------
    # node persistence helpers
    def _touch(self, v: _Node) -> None:
        if v.hdr is not None:
            v.hdr.touch()

    def _header_records(self, v: _Node) -> list:
        cs = v.cs
        cs_ref = (tuple(cs.smeta.ids), tuple(cs.ibuf.ids), tuple(cs.dbuf.ids)) if cs else ()
        recs = [(v.height, tuple(v.P.ids), tuple(v.I.ids), tuple(v.D.ids), cs_ref)]
        for i, c in enumerate(v.children):
            ref = ("leaf", tuple(c.P.ids)) if c.leaf else ("node", c.hdr.ids[0] if c.hdr.ids else None)
            recs.append((ref, v.seps[i - 1] if i else None, v.cmin[i], v.ccnt[i]))
        return recs

    def _save_header(self, v: _Node) -> None:
        if v.cs is not None:
            recs = self._header_records(v)
            if recs != v.saved or not v.cs.meta.ids:
                v.cs.set_head(recs)
                v.saved = recs

    def _pin_root(self, flag: bool) -> None:
        r = self.root
        for seg in (r.P, r.I, r.D, r.hdr):
            if seg is not None:
                seg.set_pinned(flag)

    def _set_root(self, v: _Node) -> None:
        self._pin_root(False)
        self.root = v
        v.parent = None
        self._pin_root(True)

    def _free_node(self, v: _Node) -> None:
        for seg in (v.P, v.I, v.D):
            seg.set_pinned(False)
            seg.free()
        if v.cs is not None:
            v.cs.free()
            v.cs = None
        v.dead = True

    def _set_P(self, v: _Node, new: list, old: Optional[list] = None) -> None:
        """Replace P_v, keeping the parent's entry and child structure in step."""
        if old is None:
            old = v.P.load() if v.P.n else []
        new.sort()
        v.P.save(new)
        self._save_header(v)
        u = v.parent
        if u is not None:
            i = u.children.index(v)
            u.cmin[i] = _min_key(new)
            u.ccnt[i] = len(new)
            olds, news = set(old), set(new)
            rem = [p for p in old if p not in news]
            add = [p for p in new if p not in olds]
            if rem or add:
                u.cs.update_many(rem, add)
            self._save_header(u)
        if 2 * len(new) < self.B:
            self._underflow.add(v)

    # ------------------------------------------------------------------
    # updates
    def insert(self, p) -> None:
        self._update((p[0], p[1]), True)

    def delete(self, p) -> None:
        self._update((p[0], p[1]), False)

    def _update(self, p, insert: bool) -> None:
        r, B = self.root, self.B
        P = r.P.load() if r.P.n else []
        oldP = list(P)
        if p in P:
            # live and unbuffered: nothing below can mention p
            if not insert:
                P.remove(p)
                self._set_P(r, P, oldP)
                if not r.leaf and 2 * len(P) < B:
                    self._underflow.add(r)
        elif r.leaf:
            if insert:
                P.append(p)
            self._set_P(r, P, oldP)
        else:
            I = r.I.load() if r.I.n else []
            D = r.D.load() if r.D.n else []
            if p in I:
                I.remove(p)
            if p in D:
                D.remove(p)
            m = _min_key(P)
            kp = ykey(p)
            if insert:
                if m is None or kp >= m:
                    P.append(p)
                    if len(P) > B:
                        low = min(P, key=ykey)
                        P.remove(low)
                        I.append(low)
                else:
                    I.append(p)
            elif m is not None and kp < m:
                D.append(p)
            if P != oldP:
                self._set_P(r, P, oldP)
            r.I.save(sorted(I))
            r.D.save(sorted(D))
            self._save_header(r)
            if 2 * len(P) < B:
                self._underflow.add(r)
        self._settle([self.root])
        self.updates_in_epoch += 1
        if self.updates_in_epoch >= self.epoch_length:
            self.global_rebuild()

    @property
    def epoch_length(self) -> int:
        return max(-(-self.n_bar // 2), self.B)

    def _settle(self, nodes) -> None:
        for v in nodes:
            if not v.dead:
                self._drain(v)
        while self._oversized:
            v = min(self._oversized, key=lambda w: w.height)
            self._oversized.discard(v)
            if not v.dead and len(v.children) > self.delta:
                self._split_internal(v)
        self._refill_pending()

    def _drain(self, v: _Node) -> None:
        """Empty overflowing buffers of v downwards; split what overflows."""
        B = self.B
        if v.leaf:
            if v.P.n > B:
                self._split_leaf(v)
            return
        while True:
            if 4 * v.D.n > B:
                self._push(v, deletes=True)
            elif v.I.n > B:
                self._push(v, deletes=False)
            else:
                break

    def _push(self, v: _Node, deletes: bool) -> None:
        self._touch(v)
        buf = v.D if deletes else v.I
        items = buf.load()
        groups: dict = {}
        for p in items:
            groups.setdefault(v.child_index(p), []).append(p)
        i = max(groups, key=lambda j: (len(groups[j]), -j))
        U = groups[i]
        Us = set(U)
        buf.save([p for p in items if p not in Us])
        self._save_header(v)
        c = v.children[i]
        self._deliver(c, [] if not deletes else U, U if not deletes else [])
        self._drain(c)

    def _deliver(self, c: _Node, dels: list, ins: list) -> None:
        """Hand buffered updates from c's parent to c (the two lists are disjoint)."""
        B = self.B
        self._touch(c)
        keys = set(dels)
        keys.update(ins)
        oldP = c.P.load() if c.P.n else []
        P = [p for p in oldP if p not in keys]
        I = D = None
        if not c.leaf:
            I = [p for p in c.I.load() if p not in keys] if c.I.n else []
            D = [p for p in c.D.load() if p not in keys] if c.D.n else []
        m = _min_key(P)
        if c.leaf:
            P.extend(ins)
        else:
            if dels and m is not None:
                dels = [p for p in dels if ykey(p) < m]
            D.extend(dels)
            if m is None:
                I.extend(ins)
            else:
                for p in ins:
                    (P if ykey(p) >= m else I).append(p)
                if len(P) > B:
                    P.sort(key=ykey)
                    I.extend(P[:len(P) - B])
                    P = P[len(P) - B:]
        if len(P) != len(oldP) or set(P) != set(oldP):
            self._set_P(c, P, oldP)
        if not c.leaf:
            if len(I) != c.I.n or ins:
                c.I.save(sorted(I))
            if len(D) != c.D.n or dels:
                c.D.save(sorted(D))
            self._save_header(c)
            if I or D:
                self._underflow.add(c)

    # ------------------------------------------------------------------
    # splits
    def _attach(self, v: _Node, pieces: List[_Node], seps: list) -> None:
        """Replace v in its parent by ``pieces`` (v is pieces[0])."""
        u = v.parent
        if u is None:
            u = _Node(self.store, False, v.height + 1)
            u.children = [v]
            u.cmin = [None]
            u.ccnt = [0]
            v.parent = u
            fresh = True
        else:
            fresh = False
            self._touch(u)
        i = u.children.index(v)
        u.children[i + 1:i + 1] = pieces[1:]
        u.seps[i:i] = seps
        u.cmin[i + 1:i + 1] = [None] * (len(pieces) - 1)
        u.ccnt[i + 1:i + 1] = [0] * (len(pieces) - 1)
        for j, w in enumerate(pieces):
            w.parent = u
            pts = w.P.load() if w.P.n else []
            u.cmin[i + j] = _min_key(pts)
            u.ccnt[i + j] = len(pts)
        if fresh:
            u.cs = ChildStructure.build(
                sorted(p for w in pieces for p in (w.P.load() if w.P.n else [])), self.store, self.cfg)
            self._save_header(u)
            self._set_root(u)
            self._underflow.add(u)
        else:
            self._save_header(u)
            if len(u.children) > self.delta:
                self._oversized.add(u)

    @staticmethod
    def _even_cuts(n: int, k: int) -> List[int]:
        return [n * j // k for j in range(k + 1)]

    def _split_leaf(self, v: _Node) -> None:
        B = self.B
        pts = v.P.load()
        k = -(-len(pts) // B)
        cuts = self._even_cuts(len(pts), k)
        parts = [pts[cuts[j]:cuts[j + 1]] for j in range(k)]
        pieces = [v] + [_Node(self.store, True, 0) for _ in range(k - 1)]
        for w, part in zip(pieces, parts):
            w.P.save(part)
        self._attach(v, pieces, [part[0] for part in parts[1:]])

    def _split_internal(self, v: _Node) -> None:
        d = len(v.children)
        k = -(-d // self.delta)
        cuts = self._even_cuts(d, k)
        seps = [v.seps[cuts[j] - 1] for j in range(1, k)]
        P = v.P.load() if v.P.n else []
        I = v.I.load() if v.I.n else []
        D = v.D.load() if v.D.n else []
        children, vseps, cmin, ccnt = v.children, v.seps, v.cmin, v.ccnt
        v.cs.free()
        pieces = [v] + [_Node(self.store, False, v.height) for _ in range(k - 1)]
        for j, w in enumerate(pieces):
            a, b = cuts[j], cuts[j + 1]
            lo = seps[j - 1] if j else None
            hi = seps[j] if j < k - 1 else None

            def inside(p, lo=lo, hi=hi):
                return (lo is None or p >= lo) and (hi is None or p < hi)

            w.children = children[a:b]
            w.seps = vseps[a:b - 1]
            w.cmin = cmin[a:b]
            w.ccnt = ccnt[a:b]
            for c in w.children:
                c.parent = w
            w.P.save([p for p in P if inside(p)])
            w.I.save([p for p in I if inside(p)])
            w.D.save([p for p in D if inside(p)])
            w.cs = ChildStructure.build(
                sorted(p for c in w.children for p in (c.P.load() if c.P.n else [])), self.store, self.cfg)
            self._save_header(w)
            self._underflow.add(w)
        if v is self.root:
            self._pin_root(False)
        self._attach(v, pieces, seps)

    # ------------------------------------------------------------------
    # refilling point buffers
    def _needs_refill(self, v: _Node) -> bool:
        if v.leaf or v.dead or 2 * v.P.n >= self.B:
            return False
        return bool(v.I.n or v.D.n or any(v.ccnt))

    def _refill_pending(self) -> None:
        while self._underflow:
            cand = sorted((v for v in self._underflow if not v.dead), key=lambda v: v.height)
            self._underflow.clear()
            for v in cand:
                if self._needs_refill(v):
                    self._refill(v)

    def _refill(self, v: _Node) -> None:
        while self._needs_refill(v):
            for c in v.children:
                if self._needs_refill(c):
                    self._refill(c)
            self._touch(v)
            if not any(v.ccnt):
                self._promote(v)
                break
            self._pull(v)
        for c in v.children:
            if self._needs_refill(c):
                self._refill(c)

    def _promote(self, v: _Node) -> None:
        """Subtree below v is empty: drop D_v, lift the best of I_v into P_v."""
        B = self.B
        P = v.P.load() if v.P.n else []
        oldP = list(P)
        I = sorted(v.I.load(), key=ykey) if v.I.n else []
        while I and len(P) < B:
            P.append(I.pop())
        v.D.save([])
        v.I.save(sorted(I))
        self._set_P(v, P, oldP)
        self._save_header(v)

    def _pull(self, v: _Node) -> None:
        """Move the B/2 highest points of v's children up into P_v."""
        half = max(1, self.B // 2)
        cand = []
        loaded = {}
        for i, c in enumerate(v.children):
            if v.ccnt[i]:
                loaded[c] = c.P.load()
                cand.extend(loaded[c])
        X = heapq.nlargest(half, cand, key=ykey)
        Xs = set(X)
        for c, pc in loaded.items():
            rest = [p for p in pc if p not in Xs]
            if len(rest) != len(pc):
                self._set_P(c, rest, pc)
        D = v.D.load() if v.D.n else []
        Ds = set(D)
        X = [p for p in X if p not in Ds]
        D = [p for p in D if p not in Xs]
        I = v.I.load() if v.I.n else []
        if I:
            # a point both pulled and pending in I_v keeps a single copy
            I = [p for p in I if p not in Xs]
            pool = sorted(X + I, key=ykey)
            cut = len(pool) - len(X)
            I, X = pool[:cut], pool[cut:]
        if X and D:
            floor = min(map(ykey, X))
            D = [p for p in D if ykey(p) < floor]
        P = v.P.load() if v.P.n else []
        oldP = list(P)
        self._set_P(v, P + X, oldP)
        v.I.save(sorted(I))
        v.D.save(sorted(D))
        self._save_header(v)

    # ------------------------------------------------------------------
    # global rebuilding
    def live_points_flush(self) -> list:
        """Collect the live set top-down, pushing buffered updates through scratch blocks."""
        out: list = []
        state: dict = {}

        def walk(v, pend):
            self._touch(v)
            for p in (v.P.load() if v.P.n else []):
                s = state.get(p)
                if s is None or s == "I":
                    out.append(p)
                    state[p] = "done"
            for seg, tag in ((v.I, "I"), (v.D, "D")):
                if seg.n:
                    for p in seg.load():
                        if p not in state:
                            state[p] = tag
                            pend.append(p)
            if v.leaf:
                out.extend(p for p in pend if state[p] == "I")
                for p in pend:
                    if state[p] == "I":
                        state[p] = "done"
                return
            pend.sort()
            parts = [[] for _ in v.children]
            for p in pend:
                parts[v.child_index(p)].append(p)
            for c, part in zip(v.children, parts):
                seg = Segment(self.store, SCRATCH, part) if part else None
                walk(c, seg.load() if seg else [])
                if seg:
                    seg.free()

        walk(self.root, [])
        return out

    def global_rebuild(self) -> None:
        live = self.live_points_flush()
        self._free_tree()
        self.rebuilds += 1
        self._construct(live, presorted=False)
        log.debug("global rebuild #%d with %d points", self.rebuilds, len(live))

    def _free_tree(self) -> None:
        self._pin_root(False)
        stack = [self.root]
        while stack:
            v = stack.pop()
            stack.extend(v.children)
            self._free_node(v)
        self._underflow.clear()
        self._oversized.clear()

    # ------------------------------------------------------------------
    # introspection
    def nodes(self):
        """All nodes in pre-order."""
        stack = [self.root]
        while stack:
            v = stack.pop()
            yield v
            stack.extend(reversed(v.children))

    @property
    def height(self) -> int:
        return self.root.height

    def live_points(self) -> list:
        """Live set by top-down replay of buffers (no IO accounting)."""
        from .check import replay_live
        return replay_live(self)

    def __len__(self) -> int:
        return len(self.live_points())

    # ------------------------------------------------------------------
    # queries (implemented in query.py)
    def report(self, x1, x2, y=NEG_INF) -> list:
        from .query import report_3sided
        from .model import ThreeSidedQuery
        return report_3sided(self, ThreeSidedQuery(x1, x2, y))

    def top_k(self, x1, x2, k) -> list:
        from .query import top_k
        from .model import TopKQuery
        return top_k(self, TopKQuery(x1, x2, k))

    # ------------------------------------------------------------------
    # persistence
    def save(self, path) -> None:
        """Rebuild into canonical form, then write the block file."""
        self.global_rebuild()
        sb = Segment(self.store, SUPER, [
            (self.cfg.epsilon.numerator, self.cfg.epsilon.denominator),
            (self.cfg.M, self.cfg.alpha), (self.n_bar, self.updates_in_epoch)])
        try:
            self.store.save(path)
        finally:
            sb.free()

    @classmethod
    def load(cls, path) -> "PrioritySearchTree":
        from fractions import Fraction
        B, blocks = BlockStore.read_file(path)
        sup = [r for _, kind, recs in blocks if kind == SUPER for r in recs]
        if len(sup) != 3:
            raise FormatError("block file lacks a superblock")
        (p, q), (M, alpha), _ = sup
        cfg = Config(B=B, epsilon=Fraction(p, q), M=M, alpha=alpha)
        pts = sorted(tuple(r) for _, kind, recs in blocks if kind == PBUF for r in recs)
        return cls.bulk_construct(pts, cfg, presorted=True)
