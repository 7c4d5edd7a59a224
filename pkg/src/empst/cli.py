"""Command line: ``empst run``, ``empst bench``, ``empst gen``.

Exit codes: 0 success, 1 divergence or invariant violation, 2 parse/config error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from typing import List, Optional

from .bench import MODES, sweep, to_csv
from .blockstore import FormatError
from .model import Config, InvalidConfig, parse_fraction
from .tree import DuplicatePoint, PrioritySearchTree
from .workload import DivergenceError, ParseError, format_op, generate_ops, parse_workload, run_ops, shrink


def _config(args) -> Config:
    try:
        eps = parse_fraction(args.epsilon)
    except (ValueError, ZeroDivisionError):
        raise InvalidConfig(f"cannot parse epsilon {args.epsilon!r}") from None
    B = args.block_size
    return Config(B=B, epsilon=eps, M=args.memory or 16 * B)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--block-size", "-B", type=int, default=16, help="records per block")
    p.add_argument("--epsilon", default="1/2", help="exponent as p/q, in (0, 1/2]")
    p.add_argument("--memory", "-M", type=int, default=0, help="memory in records (default 16B)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the report here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="empst", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="execute a workload file ('-' for stdin)")
    r.add_argument("workload")
    _common(r)
    r.add_argument("--oracle", action="store_true", help="lockstep comparison with a brute-force set")
    r.add_argument("--check-every", type=int, default=0, metavar="N", help="invariant walker cadence")
    r.add_argument("--save", help="persist the final structure to a block file")
    r.add_argument("--load", help="start from a block file instead of an empty structure")

    b = sub.add_parser("bench", help="IO scaling sweep, CSV output")
    b.add_argument("mode", choices=MODES)
    _common(b)
    b.add_argument("--sizes", default="12:16", help="log2 N range lo:hi (inclusive)")
    b.add_argument("--block-sizes", help="comma list of B values (overrides --block-size)")
    b.add_argument("--output-size", type=int, default=0, help="K for query-scaling (default B)")
    b.add_argument("--queries", type=int, default=100)

    g = sub.add_parser("gen", help="write a random workload")
    _common(g)
    g.add_argument("--ops", type=int, default=10000)
    g.add_argument("--coord", type=int, default=1 << 20, help="coordinates drawn from [0, coord)")
    g.add_argument("--mix", default="50,25,15,10", help="percent insert,delete,report,topk")
    return ap


def _emit(args, text: str) -> None:
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_run(args) -> int:
    cfg = _config(args)
    src = sys.stdin if args.workload == "-" else open(args.workload)
    with src:
        ops = parse_workload(src.readlines())
    tree = PrioritySearchTree.load(args.load) if args.load else None
    if tree is not None:
        cfg = tree.cfg
    try:
        t, rep = run_ops(ops, cfg, oracle=args.oracle, check_every=args.check_every, tree=tree)
    except DivergenceError as e:
        print(f"divergence: {e}", file=sys.stderr)
        if tree is None:
            small = shrink(ops, cfg, args.check_every)
            print(f"minimized trace ({len(small)} ops):", file=sys.stderr)
            for op in small:
                print(f"  {format_op(op)}", file=sys.stderr)
        return 1
    if args.save:
        t.save(args.save)
    _emit(args, "\n".join(rep.output + [rep.summary()]) + "\n")
    return 0


def cmd_bench(args) -> int:
    lo, _, hi = args.sizes.partition(":")
    exps = range(int(lo), int(hi or lo) + 1)
    Bs = [int(b) for b in args.block_sizes.split(",")] if args.block_sizes else [args.block_size]
    for B in Bs:
        _config(argparse.Namespace(block_size=B, epsilon=args.epsilon, memory=args.memory))
    mem_blocks = args.memory // args.block_size if args.memory else 16
    rows = sweep(args.mode, Bs, parse_fraction(args.epsilon), exps, mem_blocks, args.seed,
                 args.output_size, args.queries)
    _emit(args, to_csv(rows))
    return 0


def cmd_gen(args) -> int:
    mix = [int(m) for m in args.mix.split(",")]
    if len(mix) != 4:
        raise InvalidConfig("--mix needs four weights")
    ops = generate_ops(args.ops, args.seed, args.coord, mix, args.block_size)
    _emit(args, "".join(format_op(op) + "\n" for op in ops))
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return {"run": cmd_run, "bench": cmd_bench, "gen": cmd_gen}[args.cmd](args)
    except (ParseError, InvalidConfig, FormatError, DuplicatePoint, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
