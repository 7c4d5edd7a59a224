import random

import pytest

from empst import Config, OracleSet, PrioritySearchTree


def random_points(n, rng, coord=1 << 20):
    pts = set()
    while len(pts) < n:
        pts.add((rng.randrange(coord), rng.randrange(coord)))
    return sorted(pts)


@pytest.fixture
def rng():
    return random.Random(12345)


def apply_random_updates(tree, oracle, rng, n, coord=1 << 12, p_insert=0.6):
    live = list(oracle)
    for _ in range(n):
        if live and rng.random() > p_insert:
            p = live.pop(rng.randrange(len(live)))
            tree.delete(p)
            oracle.delete(p)
        else:
            p = (rng.randrange(coord), rng.randrange(coord))
            tree.insert(p)
            if p not in oracle:
                live.append(p)
            oracle.insert(p)


def small_tree(B=16, eps="1/2"):
    return PrioritySearchTree(Config(B=B, epsilon=eps))


__all__ = ["random_points", "apply_random_updates", "small_tree", "OracleSet"]


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
