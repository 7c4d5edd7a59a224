"""Dynamic external-memory priority search tree over a simulated block store."""
from .blockstore import BlockStore, CachePressure, FormatError, IOStats, Overfull, Segment, UnknownBlock, external_sort
from .check import InvariantError, assert_invariants, check_invariants, replay_live
from .child import BatchTooLarge, CapacityExceeded, ChildStructure, SampleSequence
from .model import (Config, InvalidConfig, Point, ThreeSidedQuery, TopKQuery, compare_x, compare_y,
                    validate_config, ykey)
from .oracle import OracleSet, sweep_fused_blocks
from .query import external_select_topk, report_3sided, select_threshold, top_k
from .tree import DuplicatePoint, PrioritySearchTree

__all__ = [
    "BlockStore", "CachePressure", "FormatError", "IOStats", "Overfull", "Segment", "UnknownBlock",
    "external_sort", "InvariantError", "assert_invariants", "check_invariants", "replay_live",
    "BatchTooLarge", "CapacityExceeded", "ChildStructure", "SampleSequence", "Config", "InvalidConfig",
    "Point", "ThreeSidedQuery", "TopKQuery", "compare_x", "compare_y", "validate_config", "ykey",
    "OracleSet", "sweep_fused_blocks", "external_select_topk", "report_3sided", "select_threshold",
    "top_k", "DuplicatePoint", "PrioritySearchTree",
]
