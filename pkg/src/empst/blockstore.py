"""Simulated two-level memory with IO accounting.

The "disk" is a dict of immutable blocks (tuples of at most ``B`` records).
An LRU cache of ``M // B`` block frames sits in front of it: a read of a
non-resident block costs one read IO, evicting a dirty block costs one
write IO.  All structures in the package touch their data through a store.
"""
from __future__ import annotations

import struct
from collections import OrderedDict
from dataclasses import dataclass
from typing import Iterable, List, Sequence

MAGIC = b"EMPST1"

# Block kinds. Only point-bearing kinds are persisted by ``save``.
META = 0
PBUF = 1
IBUF = 2
DBUF = 3
LBLOCK = 4
CBUF = 5
SCRATCH = 6
SUPER = 7
POINT_KINDS = frozenset({PBUF, IBUF, DBUF, LBLOCK, CBUF, SUPER})


class UnknownBlock(KeyError):
    pass


class Overfull(ValueError):
    pass


class CachePressure(RuntimeError):
    pass


class FormatError(ValueError):
    pass


@dataclass(frozen=True)
class IOStats:
    reads: int = 0
    writes: int = 0
    allocated_blocks: int = 0
    peak_blocks: int = 0

    @property
    def ios(self) -> int:
        return self.reads + self.writes

    def __sub__(self, other: "IOStats") -> "IOStats":
        return IOStats(self.reads - other.reads, self.writes - other.writes,
                       self.allocated_blocks - other.allocated_blocks,
                       self.peak_blocks - other.peak_blocks)


class BlockStore:
    def __init__(self, B: int, M: int):
        if M < B:
            raise ValueError("memory must hold at least one block")
        self.B = B
        self.M = M
        self.capacity = M // B
        self._disk: dict = {}
        self._kind: dict = {}
        self._cache: "OrderedDict[int, bool]" = OrderedDict()
        self._pins: dict = {}
        self._next = 0
        self.reads = 0
        self.writes = 0
        self.peak = 0

    # -- bookkeeping -----------------------------------------------------
    @property
    def stats(self) -> IOStats:
        return IOStats(self.reads, self.writes, len(self._disk), self.peak)

    @property
    def resident_blocks(self) -> int:
        return len(self._cache)

    @property
    def pinned_blocks(self) -> int:
        return len(self._pins)

    def alloc(self, kind: int = META) -> int:
        bid = self._next
        self._next += 1
        self._disk[bid] = ()
        self._kind[bid] = kind
        if len(self._disk) > self.peak:
            self.peak = len(self._disk)
        return bid

    def free(self, bid: int) -> None:
        if bid not in self._disk:
            raise UnknownBlock(bid)
        del self._disk[bid]
        del self._kind[bid]
        self._cache.pop(bid, None)
        self._pins.pop(bid, None)

    def kind(self, bid: int) -> int:
        return self._kind[bid]

    def __contains__(self, bid) -> bool:
        return bid in self._disk

    def ids(self) -> List[int]:
        return sorted(self._disk)

    # -- cache -----------------------------------------------------------
    def _make_room(self) -> None:
        cache = self._cache
        while len(cache) >= self.capacity:
            for victim in cache:
                if victim not in self._pins:
                    break
            else:
                raise CachePressure("every resident block is pinned")
            if cache.pop(victim):
                self.writes += 1

    def read(self, bid: int) -> tuple:
        try:
            data = self._disk[bid]
        except KeyError:
            raise UnknownBlock(bid) from None
        cache = self._cache
        if bid in cache:
            cache.move_to_end(bid)
        else:
            self._make_room()
            self.reads += 1
            cache[bid] = False
        return data

    def write(self, bid: int, records: Sequence) -> None:
        if bid not in self._disk:
            raise UnknownBlock(bid)
        if len(records) > self.B:
            raise Overfull(f"{len(records)} records exceed block size {self.B}")
        self._disk[bid] = tuple(records)
        cache = self._cache
        if bid in cache:
            cache.move_to_end(bid)
        else:
            self._make_room()
        cache[bid] = True

    def peek(self, bid: int) -> tuple:
        """Block contents without IO accounting (for checkers and dumps)."""
        try:
            return self._disk[bid]
        except KeyError:
            raise UnknownBlock(bid) from None

    def pin(self, bid: int) -> None:
        if bid in self._pins:
            return
        if len(self._pins) + 1 > self.capacity - 1:
            raise CachePressure("pinning would leave no frame for further reads")
        self.read(bid)
        self._pins[bid] = True

    def unpin(self, bid: int) -> None:
        self._pins.pop(bid, None)

    def flush_all(self) -> IOStats:
        for bid, dirty in self._cache.items():
            if dirty:
                self.writes += 1
                self._cache[bid] = False
        return self.stats

    def drop_cache(self) -> None:
        """Write back and evict every unpinned block."""
        self.flush_all()
        for bid in [b for b in self._cache if b not in self._pins]:
            del self._cache[bid]

    # -- persistence -----------------------------------------------------
    def save(self, path) -> None:
        """Write point-bearing blocks to a little-endian block file.

        Layout: ``EMPST1``, u32 B, u32 record size (16), u64 block count,
        then per block in id order: u64 id, u8 kind, u32 length, and
        ``length`` records of two i64.  Metadata blocks are not persisted.
        """
        ids = [b for b in self.ids() if self._kind[b] in POINT_KINDS]
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<IIQ", self.B, 16, len(ids)))
            for bid in ids:
                recs = self._disk[bid]
                fh.write(struct.pack("<QBI", bid, self._kind[bid], len(recs)))
                for x, y in recs:
                    fh.write(struct.pack("<qq", x, y))

    @staticmethod
    def read_file(path):
        """Parse a block file; returns ``(B, [(id, kind, records), ...])``."""
        with open(path, "rb") as fh:
            data = fh.read()
        if data[:6] != MAGIC:
            raise FormatError("bad magic")
        B, rsize, n = struct.unpack_from("<IIQ", data, 6)
        if rsize != 16:
            raise FormatError(f"unsupported record size {rsize}")
        off = 6 + 16
        blocks = []
        for _ in range(n):
            bid, kind, ln = struct.unpack_from("<QBI", data, off)
            off += 13
            recs = [struct.unpack_from("<qq", data, off + 16 * i) for i in range(ln)]
            off += 16 * ln
            blocks.append((bid, kind, recs))
        if off != len(data):
            raise FormatError("trailing bytes")
        return B, blocks


class Segment:
    """A record sequence stored in a list of blocks of one kind.

    The record count is kept here (it lives in the owner's header); the
    records themselves only live in the store.
    """

    __slots__ = ("store", "ids", "n", "kind", "pinned")

    def __init__(self, store: BlockStore, kind: int, records: Iterable = (), pinned: bool = False):
        self.store = store
        self.kind = kind
        self.ids: List[int] = []
        self.n = 0
        self.pinned = pinned
        records = list(records)
        if records:
            self.save(records)

    def __len__(self) -> int:
        return self.n

    def load(self) -> list:
        read = self.store.read
        if len(self.ids) == 1:
            return list(read(self.ids[0]))
        out: list = []
        for bid in self.ids:
            out.extend(read(bid))
        return out

    def touch(self) -> None:
        for bid in self.ids:
            self.store.read(bid)

    def peek(self) -> list:
        out: list = []
        for bid in self.ids:
            out.extend(self.store.peek(bid))
        return out

    def save(self, records: Sequence) -> None:
        store = self.store
        B = store.B
        need = -(-len(records) // B)
        ids = self.ids
        while len(ids) < need:
            bid = store.alloc(self.kind)
            ids.append(bid)
            if self.pinned:
                store.write(bid, ())
                store.pin(bid)
        while len(ids) > need:
            store.free(ids.pop())
        for i, bid in enumerate(ids):
            store.write(bid, records[i * B:(i + 1) * B])
        self.n = len(records)

    def set_pinned(self, pinned: bool) -> None:
        if pinned == self.pinned:
            return
        self.pinned = pinned
        for bid in self.ids:
            if pinned:
                self.store.pin(bid)
            else:
                self.store.unpin(bid)

    def free(self) -> None:
        for bid in self.ids:
            self.store.free(bid)
        self.ids = []
        self.n = 0


def external_sort(store: BlockStore, records: Iterable, key=None) -> Segment:
    """Sort ``records`` through the store with run formation and (M/B)-way merging.

    Input is streamed into memory-sized runs (each run written once), then
    merged with fan-in ``M/B - 1`` until one run is left.  Returns the
    sorted output as a scratch segment owned by the caller.
    """
    import heapq

    B = store.B
    run_len = max(B, (store.capacity - 1) * B)
    fan_in = max(2, store.capacity - 1)
    runs: List[Segment] = []
    buf: list = []
    for r in records:
        buf.append(r)
        if len(buf) == run_len:
            buf.sort(key=key)
            runs.append(Segment(store, SCRATCH, buf))
            buf = []
    if buf or not runs:
        buf.sort(key=key)
        runs.append(Segment(store, SCRATCH, buf))
    while len(runs) > 1:
        merged: List[Segment] = []
        for g in range(0, len(runs), fan_in):
            group = runs[g:g + fan_in]
            if len(group) == 1:
                merged.append(group[0])
                continue
            out: list = []
            streams = [_stream(s) for s in group]
            out = list(heapq.merge(*streams, key=key))
            for s in group:
                s.free()
            merged.append(Segment(store, SCRATCH, out))
        runs = merged
    return runs[0]


def _stream(seg: Segment):
    for bid in list(seg.ids):
        yield from seg.store.read(bid)
