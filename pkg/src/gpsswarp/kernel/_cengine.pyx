# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled partition engine; same contract as ``_pyengine.PartitionEngine``."""

from libc.stdint cimport uint64_t, int64_t
from libc.stdlib cimport malloc, free

from .entities import Transaction, ZeroTimeLoopError

cdef enum:
    TAG_TRANSFER = 1
    TAG_GENERATE = 2
    OP_TERMINATE = 2
    TERMINATED = 0
    DEPARTED = 1
    MAX_BLOCKS_PER_MOVE = 1000000

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL


cdef inline uint64_t _mix(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t _step(uint64_t h, int64_t w) nogil:
    return _mix((h ^ <uint64_t>w) + GOLDEN)


def hash_words(seed, *words):
    cdef uint64_t h = _mix((<uint64_t>(seed & 0xFFFFFFFFFFFFFFFF)) + GOLDEN)
    for w in words:
        h = _mix((h ^ <uint64_t>(w & 0xFFFFFFFFFFFFFFFF)) + GOLDEN)
    return h


cdef inline int64_t* _alloc(Py_ssize_t n):
    cdef int64_t* p = <int64_t*>malloc((n if n > 0 else 1) * sizeof(int64_t))
    if p == NULL:
        raise MemoryError()
    return p


cdef class PartitionEngine:
    cdef public object prog
    cdef public int index
    cdef public object seed
    cdef uint64_t h0
    cdef public int64_t counter
    cdef public int64_t clock
    cdef int nblocks
    cdef int ngen
    cdef int64_t* ops
    cdef int64_t* succ
    cdef int64_t* thr
    cdef int64_t* tpart
    cdef int64_t* tblock
    cdef int64_t* dec
    cdef int64_t* ent
    cdef int64_t* gblock
    cdef int64_t* gmean
    cdef int64_t* gspread
    cdef int64_t* gtime
    cdef int64_t* gn

    backend = "cython"

    def __cinit__(self, prog, seed):
        cdef Py_ssize_t i
        self.nblocks = len(prog.ops)
        self.ngen = len(prog.gen_blocks)
        self.ops = _alloc(self.nblocks)
        self.succ = _alloc(self.nblocks)
        self.thr = _alloc(self.nblocks)
        self.tpart = _alloc(self.nblocks)
        self.tblock = _alloc(self.nblocks)
        self.dec = _alloc(self.nblocks)
        self.ent = _alloc(self.nblocks)
        self.gblock = _alloc(self.ngen)
        self.gmean = _alloc(self.ngen)
        self.gspread = _alloc(self.ngen)
        self.gtime = _alloc(self.ngen)
        self.gn = _alloc(self.ngen)

    def __init__(self, prog, seed):
        cdef Py_ssize_t i
        cdef int64_t off
        self.prog = prog
        self.index = prog.index
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.h0 = _mix(<uint64_t>self.seed + GOLDEN)
        self.counter = prog.counter
        self.clock = 0
        for i in range(self.nblocks):
            self.ops[i] = prog.ops[i]
            self.succ[i] = prog.succ[i]
            # 2**53 fits comfortably in int64
            self.thr[i] = prog.threshold[i]
            self.tpart[i] = prog.target_partition[i]
            self.tblock[i] = prog.target_block[i]
            self.dec[i] = prog.decrement[i]
            self.ent[i] = 0
        for i in range(self.ngen):
            self.gblock[i] = prog.gen_blocks[i]
            self.gmean[i] = prog.gen_mean[i]
            self.gspread[i] = prog.gen_spread[i]
            self.gn[i] = 0
            off = prog.gen_offset[i]
            self.gtime[i] = off if off >= 0 else self._interval(<int>i, 0)

    def __dealloc__(self):
        free(self.ops); free(self.succ); free(self.thr); free(self.tpart)
        free(self.tblock); free(self.dec); free(self.ent)
        free(self.gblock); free(self.gmean); free(self.gspread); free(self.gtime); free(self.gn)

    cdef int64_t _interval(self, int g, int64_t n):
        cdef int64_t spread = self.gspread[g]
        cdef uint64_t h, width
        if spread == 0:
            return self.gmean[g]
        width = <uint64_t>(2 * spread + 1)
        h = _step(self.h0, TAG_GENERATE)
        h = _step(h, self.index)
        h = _step(h, self.gblock[g])
        h = _step(h, n)
        return self.gmean[g] - spread + <int64_t>(((h >> 11) * width) >> 53)

    cdef int _head(self):
        cdef int best = 0
        cdef int g
        cdef int64_t bt, bs, s
        if self.ngen > 1:
            bt = self.gtime[0]
            bs = self.gn[0] * self.ngen
            for g in range(1, self.ngen):
                s = self.gn[g] * self.ngen + g
                if self.gtime[g] < bt or (self.gtime[g] == bt and s < bs):
                    bt = self.gtime[g]
                    bs = s
                    best = g
        return best

    @property
    def entries(self):
        return [self.ent[i] for i in range(self.nblocks)]

    @property
    def gen_time(self):
        return [self.gtime[i] for i in range(self.ngen)]

    @property
    def gen_n(self):
        return [self.gn[i] for i in range(self.ngen)]

    def peek(self):
        cdef int g
        if self.ngen == 0:
            return None
        g = self._head()
        return (self.gtime[g], 0, self.index, self.gn[g] * self.ngen + g, 0)

    def execute_arrival(self):
        cdef int g = self._head()
        cdef int64_t t = self.gtime[g]
        cdef int64_t n = self.gn[g]
        cdef int64_t seq = n * self.ngen + g
        cdef int64_t b
        self.gn[g] = n + 1
        self.gtime[g] = t + self._interval(g, n + 1)
        self.clock = t
        b = self.gblock[g]
        self.ent[b] += 1
        return self._walk(self.succ[b], t, 0, self.index, seq, 0, 0)

    def execute_input(self, txn):
        self.clock = txn[0]
        return self._walk(txn[6], txn[0], txn[1], txn[2], txn[3], txn[4], txn[7])

    cdef object _walk(self, int64_t b, int64_t t, int64_t prio, int64_t origin, int64_t seq,
                      int64_t hop, int64_t draws):
        cdef int64_t p = self.index
        cdef int64_t steps = 0
        cdef int64_t nb, tp
        cdef uint64_t h
        while True:
            self.ent[b] += 1
            if self.ops[b] == OP_TERMINATE:
                self.counter -= self.dec[b]
                return (TERMINATED, None, self.counter <= 0)
            h = _step(self.h0, TAG_TRANSFER)
            h = _step(h, p)
            h = _step(h, b)
            h = _step(h, origin)
            h = _step(h, seq)
            h = _step(h, draws)
            draws += 1
            if <int64_t>(h >> 11) < self.thr[b]:
                tp = self.tpart[b]
                nb = self.tblock[b]
                if tp != p:
                    return (DEPARTED, Transaction(t, prio, origin, seq, hop + 1, tp, nb, draws), False)
            else:
                nb = self.succ[b]
            b = nb
            steps += 1
            if steps > MAX_BLOCKS_PER_MOVE:
                raise ZeroTimeLoopError(f"partition {p}: transaction {origin}.{seq} loops without leaving")

    def snapshot(self):
        return (self.counter, self.clock, tuple(self.entries), tuple(self.gen_time), tuple(self.gen_n))

    def restore(self, snap):
        cdef Py_ssize_t i
        counter, clock, entries, gen_time, gen_n = snap
        self.counter = counter
        self.clock = clock
        for i in range(self.nblocks):
            self.ent[i] = entries[i]
        for i in range(self.ngen):
            self.gtime[i] = gen_time[i]
            self.gn[i] = gen_n[i]

    def canonical(self):
        chain = []
        for g in range(self.ngen):
            chain.append([self.gtime[g], 0, self.index, self.gn[g] * self.ngen + g, self.gblock[g]])
        chain.sort()
        return {
            "partition": self.index,
            "clock": self.clock,
            "counter": self.counter,
            "entries": self.entries,
            "chain": chain,
            "next_sequence": self.gen_n,
        }
