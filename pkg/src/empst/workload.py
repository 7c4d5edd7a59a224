"""Line-oriented workloads: parsing, generation and lockstep execution.

Grammar, one operation per line (``#`` starts a comment)::

    I x y          insert
    D x y          delete
    R x1 x2 y      3-sided report
    T x1 x2 k      top-k
    CHECK          run the invariant walker (and compare with the oracle)
    STATS          print the IO counters
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

from .check import check_invariants
from .model import Config
from .oracle import OracleSet
from .tree import PrioritySearchTree

_ARITY = {"I": 2, "D": 2, "R": 3, "T": 3, "CHECK": 0, "STATS": 0}


class ParseError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


class DivergenceError(AssertionError):
    def __init__(self, index: int, op, expected, got, detail: str = ""):
        self.index, self.op, self.expected, self.got = index, op, expected, got
        msg = f"op {index} {format_op(op)}: expected {expected}, got {got}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


@dataclass(frozen=True)
class Op:
    code: str
    args: tuple = ()
    line: int = 0


def format_op(op: Op) -> str:
    return " ".join([op.code, *map(str, op.args)])


def parse_workload(lines) -> List[Op]:
    if isinstance(lines, str):
        lines = lines.splitlines()
    ops = []
    for n, raw in enumerate(lines, 1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        parts = text.split()
        code = parts[0].upper()
        if code not in _ARITY:
            raise ParseError(n, f"unknown operation {parts[0]!r}")
        if len(parts) - 1 != _ARITY[code]:
            raise ParseError(n, f"{code} takes {_ARITY[code]} arguments, got {len(parts) - 1}")
        try:
            args = tuple(int(a) for a in parts[1:])
        except ValueError:
            raise ParseError(n, "arguments must be integers") from None
        if code in ("R", "T") and args[0] > args[1]:
            raise ParseError(n, "x1 must not exceed x2")
        if code == "T" and args[2] < 0:
            raise ParseError(n, "k must be non-negative")
        ops.append(Op(code, args, n))
    return ops


def generate_ops(n: int, seed: int = 0, coord: int = 1 << 20, mix=(50, 25, 15, 10),
                 B: int = 16, hit_rate: float = 0.9) -> List[Op]:
    """Random mixed workload.  Deletes mostly target live points; query
    ranges are sized to hold a few blocks' worth of points."""
    rng = random.Random(seed)
    live: list = []
    where: dict = {}
    weights = list(mix)
    ops = []
    for i in range(n):
        code = rng.choices("IDRT", weights)[0]
        if code == "I":
            p = (rng.randrange(coord), rng.randrange(coord))
            if p not in where:
                where[p] = len(live)
                live.append(p)
            ops.append(Op("I", p, i + 1))
        elif code == "D":
            if live and rng.random() < hit_rate:
                p = live[rng.randrange(len(live))]
                j = where.pop(p)
                last = live.pop()
                if j < len(live):
                    live[j] = last
                    where[last] = j
            else:
                p = (rng.randrange(coord), rng.randrange(coord))
                if p in where:
                    j = where.pop(p)
                    last = live.pop()
                    if j < len(live):
                        live[j] = last
                        where[last] = j
            ops.append(Op("D", p, i + 1))
        else:
            width = coord * rng.randrange(1, 4 * B + 1) // max(1, len(live))
            x1 = rng.randrange(coord)
            x2 = min(coord, x1 + width)
            if code == "R":
                ops.append(Op("R", (x1, x2, rng.randrange(coord)), i + 1))
            else:
                ops.append(Op("T", (x1, x2, rng.randrange(1, 2 * B + 1)), i + 1))
    return ops


@dataclass
class RunReport:
    ops: int = 0
    updates: int = 0
    queries: int = 0
    checks: int = 0
    reads: int = 0
    writes: int = 0
    output: List[str] = field(default_factory=list)

    def summary(self) -> str:
        return (f"ops={self.ops} updates={self.updates} queries={self.queries} checks={self.checks} "
                f"reads={self.reads} writes={self.writes} ios={self.reads + self.writes}")


def _fmt_points(pts) -> str:
    return " ".join(f"{x},{y}" for x, y in pts)


def run_ops(ops: Sequence[Op], cfg: Config, *, oracle: bool = False, check_every: int = 0,
            tree: Optional[PrioritySearchTree] = None, record: bool = True,
            on_op: Optional[Callable] = None) -> tuple:
    """Execute ``ops``; returns ``(tree, report)``.

    With ``oracle`` every query and CHECK is compared with a brute-force
    set and the first mismatch raises DivergenceError.
    """
    t = tree if tree is not None else PrioritySearchTree(cfg)
    o = OracleSet(t.live_points()) if oracle else None
    rep = RunReport()
    out = rep.output
    for idx, op in enumerate(ops):
        code, a = op.code, op.args
        if code == "I":
            t.insert(a)
            if o is not None:
                o.insert(a)
            rep.updates += 1
        elif code == "D":
            t.delete(a)
            if o is not None:
                o.delete(a)
            rep.updates += 1
        elif code == "R":
            got = sorted(t.report(*a))
            rep.queries += 1
            if o is not None:
                exp = o.report(*a)
                if got != exp:
                    raise DivergenceError(idx, op, exp, got)
            if record:
                out.append(f"R {a[0]} {a[1]} {a[2]} -> {len(got)}: {_fmt_points(got)}".rstrip())
        elif code == "T":
            got = t.top_k(*a)
            rep.queries += 1
            if o is not None:
                exp = o.topk(*a)
                if sorted(got) != sorted(exp):
                    raise DivergenceError(idx, op, exp, got)
            if record:
                out.append(f"T {a[0]} {a[1]} {a[2]} -> {len(got)}: {_fmt_points(got)}".rstrip())
        elif code == "CHECK":
            _check(t, o, idx, op)
            rep.checks += 1
            if record:
                out.append("CHECK ok")
        elif code == "STATS":
            s = t.store.stats
            if record:
                out.append(f"STATS reads={s.reads} writes={s.writes} blocks={s.allocated_blocks}")
        rep.ops += 1
        if check_every and rep.ops % check_every == 0:
            _check(t, o, idx, op)
            rep.checks += 1
        if on_op is not None:
            on_op(idx, op, t, o)
    s = t.store.stats
    rep.reads, rep.writes = s.reads, s.writes
    return t, rep


def _check(t, o, idx, op) -> None:
    errs = check_invariants(t)
    if errs:
        raise DivergenceError(idx, op, "sound structure", errs[:3], "invariant violation")
    if o is not None:
        live = t.live_points()
        if live != list(o):
            exp = set(o)
            got = set(live)
            raise DivergenceError(idx, op, sorted(exp - got)[:5], sorted(got - exp)[:5], "live set differs")


def diverges(ops: Sequence[Op], cfg: Config, check_every: int = 0) -> bool:
    try:
        run_ops(ops, cfg, oracle=True, check_every=check_every, record=False)
    except DivergenceError:
        return True
    return False


def shrink(ops: Sequence[Op], cfg: Config, check_every: int = 0) -> List[Op]:
    """Smallest failing trace we can find: cut to the diverging prefix, then
    drop ever smaller chunks (halving, binary-search style) while the
    divergence persists."""
    ops = list(ops)
    try:
        run_ops(ops, cfg, oracle=True, check_every=check_every, record=False)
        return ops
    except DivergenceError as e:
        ops = ops[:e.index + 1]
    chunk = max(1, len(ops) // 2)
    while True:
        i = 0
        while i < len(ops) - 1:
            cand = ops[:i] + ops[i + chunk:] if i + chunk < len(ops) else ops[:i] + ops[-1:]
            if len(cand) < len(ops) and diverges(cand, cfg, check_every):
                ops = cand
            else:
                i += chunk
        if chunk == 1:
            return ops
        chunk //= 2
