"""Transactions, ordering keys and the counter-based random stream."""

from __future__ import annotations

import math
from typing import NamedTuple

# outcome kinds returned by engine moves
TERMINATED = 0
DEPARTED = 1

TAG_TRANSFER = 1
TAG_GENERATE = 2

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
UNIT_BITS = 53
UNIT = 1 << UNIT_BITS

INF_TIME = math.inf
MIN_KEY = (-1, 0, -1, -1)
INF_KEY = (INF_TIME, 0, 0, 0)


class ZeroTimeLoopError(RuntimeError):
    """A transaction kept looping inside one partition without terminating or leaving."""


class EventKey(NamedTuple):
    """Total order of pending moves: time asc, priority desc, uid asc.

    Stored with the priority negated so that plain tuple comparison gives the
    required order.
    """

    time: int
    neg_priority: int
    origin: int
    seq: int

    @property
    def priority(self) -> int:
        return -self.neg_priority

    @property
    def uid(self) -> tuple[int, int]:
        return (self.origin, self.seq)

    @classmethod
    def of(cls, time: int, priority: int, origin: int, seq: int) -> "EventKey":
        return cls(time, -priority, origin, seq)

    def __str__(self) -> str:
        if self.time == INF_TIME:
            return "+inf"
        return f"({self.time},{self.priority},{self.origin}.{self.seq})"


class Transaction(NamedTuple):
    time: int
    priority: int
    origin: int
    seq: int
    hop: int  # number of partition crossings so far
    partition: int  # where it is headed / located
    block: int
    draws: int  # TRANSFER draws consumed so far

    @property
    def uid(self) -> tuple[int, int]:
        return (self.origin, self.seq)

    @property
    def event_key(self) -> EventKey:
        return EventKey(self.time, -self.priority, self.origin, self.seq)

    @property
    def move_key(self) -> tuple:
        return (self.time, -self.priority, self.origin, self.seq, self.hop)


def move_key(txn: Transaction) -> tuple:
    """Full chain order: the event key refined by hop count.

    Two copies of one transaction with equal time (a zero-time loop through
    other partitions) are ordered causally by their hop count.
    """
    return (txn[0], -txn[1], txn[2], txn[3], txn[4])


def event_key(mkey: tuple) -> EventKey:
    return EventKey(*mkey[:4])


def key_to_json(key) -> list | str | None:
    if key is None:
        return None
    if key[0] == INF_TIME:
        return "inf"
    return [int(k) for k in key]


def key_from_json(obj) -> tuple | None:
    if obj is None:
        return None
    if obj == "inf":
        return INF_KEY
    return tuple(int(k) for k in obj)


# ----------------------------------------------------------------- random


def mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def hash_words(seed: int, *words: int) -> int:
    """64-bit hash of ``seed`` and a word sequence; the sole source of randomness."""
    h = mix64((seed + GOLDEN) & MASK64)
    for w in words:
        h = mix64(((h ^ (w & MASK64)) + GOLDEN) & MASK64)
    return h


class Rng:
    """Counter-based generator: every draw is a pure function of its coordinates.

    Replaying a draw after a rollback yields the same value no matter in which
    order the draws were first made.
    """

    __slots__ = ("seed",)

    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64

    def bits53(self, *words: int) -> int:
        return hash_words(self.seed, *words) >> 11

    def uniform(self, *words: int) -> float:
        return self.bits53(*words) / UNIT

    def transfer_bits(self, partition: int, block: int, origin: int, seq: int, draw: int) -> int:
        return self.bits53(TAG_TRANSFER, partition, block, origin, seq, draw)

    def interval(self, partition: int, block: int, n: int, mean: int, spread: int) -> int:
        if spread == 0:
            return mean
        width = 2 * spread + 1
        return mean - spread + ((self.bits53(TAG_GENERATE, partition, block, n) * width) >> UNIT_BITS)
