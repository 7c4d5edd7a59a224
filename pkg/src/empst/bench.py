"""IO-scaling sweeps.  Each row: mode, B, epsilon, N, ops, reads, writes, ios_per_op."""
from __future__ import annotations

import csv
import io
import random
from typing import Iterable, List

from .blockstore import BlockStore
from .model import Config, ykey
from .tree import PrioritySearchTree

COLUMNS = ["mode", "B", "epsilon", "N", "ops", "reads", "writes", "ios_per_op"]
MODES = ("update-scaling", "query-scaling", "construction-scaling")


def random_points(n: int, rng: random.Random, coord: int = 1 << 40) -> list:
    pts: set = set()
    while len(pts) < n:
        pts.add((rng.randrange(coord), rng.randrange(coord)))
    return sorted(pts)


def update_cost(N: int, cfg: Config, seed: int = 0, ops: int = 0, coord: int = 1 << 40) -> dict:
    """Amortized IOs of ``ops`` random updates (default ``N/2``, one full epoch)
    against a tree built from N random points; half inserts, half deletes."""
    rng = random.Random(seed)
    pts = random_points(N, rng, coord)
    t = PrioritySearchTree.bulk_construct(pts, cfg, presorted=True)
    ops = ops or max(1, N // 2)
    live = list(pts)
    s0 = t.store.stats
    for _ in range(ops):
        if live and rng.random() < 0.5:
            j = rng.randrange(len(live))
            live[j], live[-1] = live[-1], live[j]
            t.delete(live.pop())
        else:
            p = (rng.randrange(coord), rng.randrange(coord))
            t.insert(p)
            live.append(p)
    d = t.store.stats - s0
    return {"N": N, "ops": ops, "reads": d.reads, "writes": d.writes, "tree": t}


def query_cost(N: int, cfg: Config, K: int, queries: int = 100, seed: int = 0, aging: int = 0,
               topk: bool = False) -> dict:
    """Average IOs of 3-sided (or top-k) queries whose output has exactly K points."""
    rng = random.Random(seed)
    pts = random_points(N, rng)
    t = PrioritySearchTree.bulk_construct(pts, cfg, presorted=True)
    live = list(pts)
    for _ in range(aging):
        if rng.random() < 0.5:
            j = rng.randrange(len(live))
            live[j], live[-1] = live[-1], live[j]
            t.delete(live.pop())
        else:
            p = (rng.randrange(1 << 40), rng.randrange(1 << 40))
            t.insert(p)
            live.append(p)
    live.sort()
    reads = writes = 0
    for _ in range(queries):
        span = 4 * K + rng.randrange(4 * K + 1)
        i = rng.randrange(max(1, len(live) - span))
        x1, x2 = live[i][0], live[min(len(live) - 1, i + span)][0]
        inr = sorted((p for p in live[i:i + span + 1] if x1 <= p[0] <= x2), key=ykey, reverse=True)
        s0 = t.store.stats
        if topk:
            t.top_k(x1, x2, K)
        else:
            t.report(x1, x2, inr[min(K, len(inr)) - 1][1])
        d = t.store.stats - s0
        reads += d.reads
        writes += d.writes
    return {"N": N, "ops": queries, "reads": reads, "writes": writes, "tree": t}


def construction_cost(N: int, cfg: Config, seed: int = 0, presorted: bool = True) -> dict:
    rng = random.Random(seed)
    pts = random_points(N, rng)
    if not presorted:
        rng.shuffle(pts)
    store = BlockStore(cfg.B, cfg.M)
    t = PrioritySearchTree.bulk_construct(pts, cfg, store, presorted=presorted)
    store.flush_all()
    s = store.stats
    return {"N": N, "ops": N, "reads": s.reads, "writes": s.writes, "tree": t}


def sweep(mode: str, Bs: Iterable[int], epsilon, exps: Iterable[int], memory_blocks: int = 16,
          seed: int = 0, K: int = 0, queries: int = 100) -> List[dict]:
    rows = []
    for B in Bs:
        cfg = Config(B=B, epsilon=epsilon, M=memory_blocks * B)
        for e in exps:
            N = 1 << e
            if mode == "update-scaling":
                r = update_cost(N, cfg, seed)
            elif mode == "query-scaling":
                r = query_cost(N, cfg, K or B, queries, seed)
            elif mode == "construction-scaling":
                r = construction_cost(N, cfg, seed)
            else:
                raise ValueError(f"unknown bench mode {mode!r}")
            ios = r["reads"] + r["writes"]
            rows.append({"mode": mode, "B": B, "epsilon": str(cfg.epsilon), "N": N, "ops": r["ops"],
                         "reads": r["reads"], "writes": r["writes"],
                         "ios_per_op": f"{ios / r['ops']:.6f}"})
    return rows


def to_csv(rows: List[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()
