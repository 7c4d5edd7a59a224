"""Structural invariant walker.  Reads blocks with ``peek`` so it costs no IO."""
from __future__ import annotations

from typing import List

from .model import ykey


class InvariantError(AssertionError):
    pass


def replay_live(tree) -> list:
    """Live set obtained by replaying buffered updates top-down."""
    out: list = []

    def walk(v, pend):
        # pend: key -> True (pending insert) / False (pending delete); ancestors win
        for p in v.P.peek():
            if pend.get(p, True):
                out.append(p)
            pend.pop(p, None)
        pend = dict(pend)
        for p in v.I.peek():
            pend.setdefault(p, True)
        for p in v.D.peek():
            pend.setdefault(p, False)
        if v.leaf:
            out.extend(p for p, ins in pend.items() if ins)
            return
        parts: List[dict] = [{} for _ in v.children]
        for p, ins in pend.items():
            parts[v.child_index(p)][p] = ins
        for c, part in zip(v.children, parts):
            walk(c, part)

    walk(tree.root, {})
    out.sort()
    return out


def check_invariants(tree) -> List[str]:
    """Return a list of violated properties (empty when the tree is sound)."""
    B, delta = tree.B, tree.delta
    errs: List[str] = []
    store = tree.store
    leaf_depths = set()

    def err(msg):
        errs.append(msg)

    def subtree_empty(v):
        if v.P.n or v.I.n or v.D.n:
            return False
        return all(subtree_empty(c) for c in v.children)

    def walk(v, lo, hi, depth, parent):
        P, I, D = v.P.peek(), v.I.peek(), v.D.peek()
        tag = f"node@depth{depth}[{lo}..{hi})"
        if v.parent is not parent:
            err(f"{tag}: wrong parent pointer")
        if len(P) != v.P.n or len(I) != v.I.n or len(D) != v.D.n:
            err(f"{tag}: stale segment counts")
        for name, seg in (("P", P), ("I", I), ("D", D)):
            if seg != sorted(seg):
                err(f"{tag}: {name} not x-sorted")
            for p in seg:
                if (lo is not None and p < lo) or (hi is not None and p >= hi):
                    err(f"{tag}: {name} point {p} outside node range")
                    break
        sP, sI, sD = set(P), set(I), set(D)
        if len(sP) + len(sI) + len(sD) != len(sP | sI | sD):
            err(f"{tag}: P, I, D not disjoint")
        if len(P) > B:
            err(f"{tag}: |P|={len(P)} exceeds B")
        if v.leaf:
            leaf_depths.add(depth)
            if I or D:
                err(f"{tag}: leaf with update buffers")
            return
        if len(I) > B or 4 * len(D) > B:
            err(f"{tag}: update buffer overflow |I|={len(I)} |D|={len(D)}")
        mn = min(map(ykey, P)) if P else None
        if mn is not None:
            for p in I + D:
                if ykey(p) >= mn:
                    err(f"{tag}: buffered {p} not below min P")
                    break
        if 2 * len(P) < B:
            if I or D or not all(subtree_empty(c) for c in v.children):
                err(f"{tag}: |P|={len(P)} < B/2 but subtree not empty")
        deg = len(v.children)
        if v is tree.root:
            if deg < 2:
                err(f"{tag}: internal root of degree {deg}")
        elif deg > delta or 2 * deg < delta:
            err(f"{tag}: degree {deg} outside [Delta/2, Delta]")
        if len(v.seps) != deg - 1 or v.seps != sorted(v.seps):
            err(f"{tag}: bad separators")
        if len(v.cmin) != deg or len(v.ccnt) != deg:
            err(f"{tag}: bad child entries")
        union = []
        for i, c in enumerate(v.children):
            cp = c.P.peek()
            union.extend(cp)
            cm = min(map(ykey, cp)) if cp else None
            if v.cmin[i] != cm or v.ccnt[i] != len(cp):
                err(f"{tag}: stale entry for child {i}")
            if mn is not None and cp and max(map(ykey, cp)) >= mn:
                err(f"{tag}: child {i} holds a point above min P")
            if c.height != v.height - 1:
                err(f"{tag}: child {i} height mismatch")
        if v.cs is None or sorted(union) != v.cs.peek_live():
            err(f"{tag}: child structure out of sync with children")
        recs = tree._header_records(v)
        if v.hdr.peek()[:len(recs)] != recs:
            err(f"{tag}: header block out of date")
        for i, c in enumerate(v.children):
            clo, chi = v.child_range(i, lo, hi)
            walk(c, clo, chi, depth + 1, v)

    walk(tree.root, None, None, 0, None)
    if len(leaf_depths) > 1:
        err(f"leaves at different depths {sorted(leaf_depths)}")
    if tree.updates_in_epoch > tree.epoch_length:
        err("epoch overran")
    for bid in store._pins:
        if bid not in store:
            err(f"pinned block {bid} no longer exists")
    return errs


def assert_invariants(tree) -> None:
    errs = check_invariants(tree)
    if errs:
        raise InvariantError("; ".join(errs[:10]))
