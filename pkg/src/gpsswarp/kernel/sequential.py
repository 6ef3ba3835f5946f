"""Sequential reference simulator.

All partitions share one chain ordered by move key.  A transaction crossing
into another partition ends its move and is re-queued with an incremented hop
count, so the sequence of moves seen by each partition is exactly the one a
Logical Process must reproduce.
"""

from __future__ import annotations

import heapq
import time
from typing import NamedTuple

from ..model import Generate, Model
from ..report import FinalReport, PartitionReport
from .entities import DEPARTED, Rng, Transaction
from .program import PartitionProgram, compile_model

DEFAULT_MOVE_BUDGET = 10_000_000


class MoveBudgetExceeded(RuntimeError):
    def __init__(self, budget: int, moves: int, partial=None):
        super().__init__(f"move budget of {budget} exhausted after {moves} moves")
        self.budget = budget
        self.moves = moves
        self.partial = partial


class MoveOutcome(NamedTuple):
    kind: int
    departure: Transaction | None
    ended: bool


def next_arrival(gen: Generate, partition: int, block: int, ordinal: int, n_generates: int, n: int, rng: Rng) -> Transaction:
    """Arrival ``n`` of a GENERATE block, computed from scratch.

    Independent of the engines' incremental scheduling; used to check them.
    """
    if n < 0:
        raise ValueError("sequence number must be non-negative")
    if gen.offset is not None:
        t = gen.offset
        start = 1
    else:
        t = 0
        start = 0
    for i in range(start, n + 1):
        t += rng.interval(partition, block, i, gen.mean, gen.spread)
    return Transaction(t, 0, partition, n * n_generates + ordinal, 0, partition, block, 0)


def execute_move(engine, txn: Transaction | None = None) -> MoveOutcome:
    """One transaction move: the next arrival, or ``txn`` received from elsewhere."""
    if txn is None:
        if engine.peek() is None:
            raise IndexError("transaction chain is empty")
        return MoveOutcome(*engine.execute_arrival())
    return MoveOutcome(*engine.execute_input(txn))


def run_sequential(
    model: Model,
    seed: int = 0,
    *,
    move_budget: int = DEFAULT_MOVE_BUDGET,
    backend: str | None = None,
    programs: tuple[PartitionProgram, ...] | None = None,
) -> FinalReport:
    return _simulate(model, seed, move_budget, backend, programs)[0]


def sequential_end_state(model: Model, seed: int = 0, *, move_budget: int = DEFAULT_MOVE_BUDGET) -> list[dict]:
    """Canonical engine state of every partition at the end of a sequential run."""
    return [e.canonical() for e in _simulate(model, seed, move_budget, None, None)[1]]


def _simulate(model, seed, move_budget, backend, programs):
    from . import engine_class

    cls = engine_class(backend)
    started = time.perf_counter()
    programs = programs or compile_model(model)
    engines = [cls(p, seed) for p in programs]
    # entries: (move key, partition, transaction or None for an arrival)
    chain: list = []
    for p, eng in enumerate(engines):
        k = eng.peek()
        if k is not None:
            chain.append((k, p, None))
    heapq.heapify(chain)

    moves = 0
    push, pop = heapq.heappush, heapq.heappop
    while chain:
        key, p, txn = pop(chain)
        eng = engines[p]
        if txn is None:
            kind, dep, ended = eng.execute_arrival()
            nk = eng.peek()
            if nk is not None:
                push(chain, (nk, p, None))
        else:
            kind, dep, ended = eng.execute_input(txn)
        moves += 1
        if kind == DEPARTED:
            push(chain, ((dep[0], -dep[1], dep[2], dep[3], dep[4]), dep[5], dep))
        if ended:
            break
        if moves >= move_budget:
            raise MoveBudgetExceeded(move_budget, moves)
    else:  # pragma: no cover - every valid model keeps at least one arrival pending
        raise RuntimeError("transaction chain drained before the end condition")

    parts = tuple(
        PartitionReport(model.partitions[i].name, e.counter, tuple(e.entries)) for i, e in enumerate(engines)
    )
    report = FinalReport(
        parts,
        key[0],
        tuple(key),
        (),
        (time.perf_counter() - started) * 1000.0,
        "sequential",
        {"moves": moves, "seed": seed, "backend": cls.backend},
    )
    return report, engines
