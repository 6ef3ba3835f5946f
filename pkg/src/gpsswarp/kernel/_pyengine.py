"""Pure-Python partition engine.

Mirrors ``_cengine.pyx`` move for move; the two are checked against each
other in the test suite.
"""

from __future__ import annotations

from .entities import (
    DEPARTED,
    GOLDEN,
    MASK64,
    TAG_GENERATE,
    TAG_TRANSFER,
    TERMINATED,
    UNIT_BITS,
    Transaction,
    ZeroTimeLoopError,
)
from .program import OP_TERMINATE, PartitionProgram

MAX_BLOCKS_PER_MOVE = 1_000_000


def _mix(z):
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _transfer_bits(h, p, b, origin, seq, draw):
    for w in (TAG_TRANSFER, p, b, origin, seq, draw):
        h = _mix(((h ^ (w & MASK64)) + GOLDEN) & MASK64)
    return h >> 11


def _generate_bits(h, p, b, n):
    for w in (TAG_GENERATE, p, b, n):
        h = _mix(((h ^ (w & MASK64)) + GOLDEN) & MASK64)
    return h >> 11


class PartitionEngine:
    """Simulation state of one partition plus its block semantics.

    The chain holds exactly one pending arrival per GENERATE block; received
    transactions are fed in through :meth:`execute_input`.
    """

    __slots__ = ("prog", "index", "seed", "_h0", "counter", "clock", "entries", "gen_time", "gen_n", "_ngen")

    backend = "python"

    def __init__(self, prog: PartitionProgram, seed: int):
        self.prog = prog
        self.index = prog.index
        self.seed = int(seed) & MASK64
        self._h0 = _mix((self.seed + GOLDEN) & MASK64)
        self.counter = prog.counter
        self.clock = 0
        self.entries = [0] * prog.n_blocks
        self._ngen = len(prog.gen_blocks)
        self.gen_n = [0] * self._ngen
        self.gen_time = [0] * self._ngen
        for g in range(self._ngen):
            off = prog.gen_offset[g]
            self.gen_time[g] = off if off >= 0 else self._interval(g, 0)

    def _interval(self, g, n):
        spread = self.prog.gen_spread[g]
        mean = self.prog.gen_mean[g]
        if spread == 0:
            return mean
        width = 2 * spread + 1
        bits = _generate_bits(self._h0, self.index, self.prog.gen_blocks[g], n)
        return mean - spread + ((bits * width) >> UNIT_BITS)

    def _head(self):
        gen_time = self.gen_time
        best = 0
        if self._ngen > 1:
            bk = (gen_time[0], self.gen_n[0] * self._ngen)
            for g in range(1, self._ngen):
                k = (gen_time[g], self.gen_n[g] * self._ngen + g)
                if k < bk:
                    bk = k
                    best = g
        return best

    def peek(self):
        """Move key of the next pending arrival, or None."""
        if not self._ngen:
            return None
        g = self._head()
        return (self.gen_time[g], 0, self.index, self.gen_n[g] * self._ngen + g, 0)

    def execute_arrival(self):
        g = self._head()
        t = self.gen_time[g]
        n = self.gen_n[g]
        seq = n * self._ngen + g
        self.gen_n[g] = n + 1
        self.gen_time[g] = t + self._interval(g, n + 1)
        self.clock = t
        b = self.prog.gen_blocks[g]
        self.entries[b] += 1
        return self._walk(self.prog.succ[b], t, 0, self.index, seq, 0, 0)

    def execute_input(self, txn):
        self.clock = txn[0]
        return self._walk(txn[6], txn[0], txn[1], txn[2], txn[3], txn[4], txn[7])

    def _walk(self, b, t, prio, origin, seq, hop, draws):
        prog = self.prog
        ops = prog.ops
        entries = self.entries
        p = self.index
        steps = 0
        while True:
            entries[b] += 1
            op = ops[b]
            if op == OP_TERMINATE:
                self.counter -= prog.decrement[b]
                return (TERMINATED, None, self.counter <= 0)
            # only TRANSFER remains: GENERATE blocks are never entered from above
            bits = _transfer_bits(self._h0, p, b, origin, seq, draws)
            draws += 1
            if bits < prog.threshold[b]:
                tp = prog.target_partition[b]
                nb = prog.target_block[b]
                if tp != p:
                    return (DEPARTED, Transaction(t, prio, origin, seq, hop + 1, tp, nb, draws), False)
            else:
                nb = prog.succ[b]
            b = nb
            steps += 1
            if steps > MAX_BLOCKS_PER_MOVE:
                raise ZeroTimeLoopError(f"partition {p}: transaction {origin}.{seq} loops without leaving")

    def snapshot(self):
        return (self.counter, self.clock, tuple(self.entries), tuple(self.gen_time), tuple(self.gen_n))

    def restore(self, snap):
        self.counter, self.clock, entries, gen_time, gen_n = snap
        self.entries = list(entries)
        self.gen_time = list(gen_time)
        self.gen_n = list(gen_n)

    def canonical(self) -> dict:
        """Backend-independent, field-ordered view of the state."""
        chain = []
        for g in range(self._ngen):
            chain.append([self.gen_time[g], 0, self.index, self.gen_n[g] * self._ngen + g, self.prog.gen_blocks[g]])
        chain.sort()
        return {
            "partition": self.index,
            "clock": self.clock,
            "counter": self.counter,
            "entries": list(self.entries),
            "chain": chain,
            "next_sequence": list(self.gen_n),
        }
