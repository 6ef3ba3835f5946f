"""Optimistic Logical Process for one model partition.

The LP executes transaction moves speculatively, saves engine state after
every ``checkpoint_interval`` moves and rolls back when a straggler, an
anti-transaction or a cancelback shows that some executed move was premature.

Ordering uses two keys.  The *event key* ``(time, -priority, origin, seq)``
identifies a transaction; the *move key* appends the hop count so that the
successive moves of one transaction crossing partitions at the same simulated
time are ordered.  A received transaction rolls back every executed move whose
event key is not smaller than its own.

The LP is a single-owner state machine.  It never touches another LP; all
output goes to ``outbox`` as ``(destination, payload)`` pairs for the
transport to deliver.
"""

from __future__ import annotations

import heapq
import time
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from typing import Callable, NamedTuple

from .kernel import engine_class
from .kernel.entities import DEPARTED, INF_KEY, MIN_KEY, Transaction
from .kernel.program import PartitionProgram
from .lpcc import Lpcc, LpccConfig, check_window
from .messages import (
    CONTROLLER,
    Ack,
    AntiTransactionMsg,
    CancelbackMsg,
    EndAck,
    EndBarrier,
    GvtPoll,
    GvtReport,
    GvtRequest,
    GvtResult,
    TransactionMsg,
)
from .report import PartitionReport
from .stats import LpStats

NORMAL = "normal"
PROVISIONAL_END = "provisional_end"
CANCELBACK = "cancelback"
FROZEN = "frozen"

LAZY = "lazy"
AGGRESSIVE = "aggressive"

# output entry states
VALID = 0
PENDING = 1  # undone by a rollback, waiting for re-execution to confirm or cancel it
DEAD = 2

IDLE = "idle"
EXECUTED = "executed"
END_REACHED = "provisional_end_reached"
BLOCKED = "blocked"


class ProtocolError(RuntimeError):
    pass


class StepOutcome(NamedTuple):
    kind: str
    key: tuple | None = None


class RollbackReceipt(NamedTuple):
    target: tuple
    undone: int
    coast_forward: int


@dataclass
class LpConfig:
    cancellation: str = LAZY
    checkpoint_interval: int = 1
    # ask the controller for an early GVT round once this many moves are uncommitted
    memory_request: int = 50_000

    def __post_init__(self):
        if self.cancellation not in (LAZY, AGGRESSIVE):
            raise ValueError(f"unknown cancellation mode {self.cancellation!r}")
        if self.checkpoint_interval < 1:
            raise ValueError("checkpoint interval must be at least 1")


class InputEntry:
    __slots__ = ("src", "msg_id", "txn", "key", "processed", "dead")

    def __init__(self, src: int, msg_id: int, txn: Transaction, key: tuple):
        self.src = src
        self.msg_id = msg_id
        self.txn = txn
        self.key = key
        self.processed = False
        self.dead = False


class OutEntry:
    __slots__ = ("msg_id", "dest", "txn", "send_key", "state")

    def __init__(self, msg_id: int, dest: int, txn: Transaction, send_key: tuple):
        self.msg_id = msg_id
        self.dest = dest
        self.txn = txn
        self.send_key = send_key
        self.state = VALID


def _ek(record) -> tuple:
    return record[0][:4]


def _mk(record) -> tuple:
    return record[0]


class LogicalProcess:
    def __init__(
        self,
        program: PartitionProgram,
        n_lps: int,
        seed: int = 0,
        config: LpConfig | None = None,
        lpcc: LpccConfig | None = None,
        *,
        clock: Callable[[], float] = time.perf_counter,
        backend: str | None = None,
        name: str | None = None,
    ):
        self.index = program.index
        self.name = name if name is not None else program.name
        self.n_lps = n_lps
        self.config = config or LpConfig()
        self.engine = engine_class(backend)(program, seed)
        self.clock = clock
        self.mode = NORMAL
        self.end_key: tuple | None = None
        self.gvt: tuple = MIN_KEY
        self.stats = LpStats()
        self.outbox: list = []
        self.work = 0  # moves executed plus coast-forward steps; drives the virtual clock

        # executed moves: (move key, InputEntry or None, OutEntry or None)
        self.history: list = []
        self.hbase = 0  # absolute position of history[0]
        self.cpos = 0  # absolute position of the commit boundary
        self.committed_key: tuple = MIN_KEY  # event key of the last committed move
        self.cp_pos: list[int] = [0]
        self.cp_state: list = [self.engine.snapshot()]

        self.inputs: dict = {}  # (src, msg_id) -> InputEntry
        self._pending: list = []  # heap of (key, src, msg_id, InputEntry)
        self.n_pending = 0
        self.output: dict = {}  # msg_id -> OutEntry
        self._cancel_heap: list = []  # heap of (send key, msg_id, OutEntry) awaiting re-execution
        self._cancel_index: dict = {}  # txn -> OutEntry in PENDING state
        self._unacked: dict = {}  # msg_id -> event key
        self._unacked_to = [0] * n_lps
        self._unacked_dest: dict = {}
        self.cancelled_back: dict = {}  # (src, msg_id) -> key, for antis that cross a cancelback
        self.orphan_antis: dict = {}
        self._next_id = 0
        self.sent_counts = [0] * n_lps
        self.recv_counts = [0] * n_lps

        self.violations: list[str] = []
        self.gvt_log: list[tuple] = []
        self._requested = False

        self.lpcc: Lpcc | None = None
        if lpcc is not None:
            self.lpcc = Lpcc(lpcc, clock)
        self._since_eval = 0

    # ------------------------------------------------------------------ views
    @property
    def uncommitted(self) -> int:
        return self.hbase + len(self.history) - self.cpos

    @property
    def load(self) -> int:
        """Uncommitted moves plus received transactions not yet executed."""
        return self.uncommitted + self.n_pending

    @property
    def lvt(self) -> tuple:
        return self.history[-1][0] if self.history else MIN_KEY + (0,)

    def canonical(self) -> dict:
        return self.engine.canonical()

    # --------------------------------------------------------------- stepping
    def step_once(self) -> StepOutcome:
        """Execute at most one move."""
        if self.mode is not NORMAL:
            return StepOutcome(BLOCKED if self.mode is CANCELBACK else IDLE)
        if self.step(1) == 0:
            return StepOutcome(IDLE)
        if self.mode is PROVISIONAL_END:
            return StepOutcome(END_REACHED, self.end_key)
        return StepOutcome(EXECUTED, self.history[-1][0])

    def step(self, max_moves: int) -> int:
        """Execute up to ``max_moves`` moves; returns how many were executed."""
        if self.mode is not NORMAL:
            return 0
        engine = self.engine
        history = self.history
        pending = self._pending
        cancel_heap = self._cancel_heap
        stats = self.stats
        interval = self.config.checkpoint_interval
        lpcc = self.lpcc
        pop = heapq.heappop
        done = 0
        while done < max_moves:
            ak = engine.peek()
            while pending and (pending[0][3].dead or pending[0][3].processed):
                pop(pending)
            if pending and (ak is None or pending[0][0] < ak):
                mk, _, _, entry = pop(pending)
            elif ak is not None:
                mk = ak
                entry = None
            else:
                break
            if cancel_heap and cancel_heap[0][0] < mk:
                self._flush_cancellations(mk)
            if entry is None:
                kind, dep, ended = engine.execute_arrival()
            else:
                entry.processed = True
                self.n_pending -= 1
                kind, dep, ended = engine.execute_input(entry.txn)
            out = self._send_departure(dep, mk) if kind == DEPARTED else None
            history.append((mk, entry, out))
            stats.executed += 1
            done += 1
            pos = self.hbase + len(history)
            if pos % interval == 0:
                self.cp_pos.append(pos)
                self.cp_state.append(engine.snapshot())
            if ended:
                self.mode = PROVISIONAL_END
                self.end_key = mk
                break
            if lpcc is not None:
                self._since_eval += 1
                if self._since_eval >= lpcc.config.eval_every:
                    self._evaluate_lpcc()
                    if self.mode is not NORMAL:
                        break
        self.work += done
        if (
            not self._requested
            and self.uncommitted >= self.config.memory_request
        ):
            self._requested = True
            self.outbox.append((CONTROLLER, GvtRequest(self.index)))
        return done

    # ---------------------------------------------------------------- sending
    def _new_id(self) -> int:
        self._next_id += 1
        return self._next_id

    def _post(self, dest: int, payload, key: tuple) -> None:
        self.sent_counts[dest] += 1
        self._unacked[payload.msg_id] = key
        self._unacked_dest[payload.msg_id] = dest
        self._unacked_to[dest] += 1
        self.outbox.append((dest, payload))

    def _send_departure(self, dep: Transaction, mk: tuple) -> OutEntry:
        if self._cancel_index:
            prior = self._cancel_index.pop(dep, None)
            if prior is not None:
                prior.state = VALID
                self.stats.suppressed += 1
                return prior
        out = OutEntry(self._new_id(), dep[5], dep, mk)
        self.output[out.msg_id] = out
        self._post(out.dest, TransactionMsg(out.msg_id, dep), _txn_ek(dep))
        self.stats.sent += 1
        return out

    def _emit_anti(self, out: OutEntry) -> None:
        key = _txn_ek(out.txn)
        if key <= self.gvt:
            self.violations.append(f"anti-transaction for committed key {key} (gvt {self.gvt})")
        out.state = DEAD
        self.output.pop(out.msg_id, None)
        self._post(out.dest, AntiTransactionMsg(self._new_id(), out.msg_id, out.txn), key)
        self.stats.anti_sent += 1

    def _flush_cancellations(self, upto: tuple) -> None:
        """Lazy cancellation: re-execution has passed these sends without regenerating them."""
        heap = self._cancel_heap
        while heap and heap[0][0] < upto:
            _, _, out = heapq.heappop(heap)
            if out.state == PENDING:
                self._cancel_index.pop(out.txn, None)
                self._emit_anti(out)

    # --------------------------------------------------------------- rollback
    def rollback(self, target: tuple) -> RollbackReceipt:
        """Undo every executed move whose event key is >= ``target``."""
        history = self.history
        i = bisect_left(history, target, key=_ek)
        if i == len(history):
            return RollbackReceipt(target, 0, 0)
        if self.hbase + i < self.cpos or target <= self.committed_key:
            raise ProtocolError(f"LP{self.index}: rollback to {target} would undo committed moves (gvt {self.gvt})")
        if target <= self.gvt:
            self.violations.append(f"rollback target {target} below gvt {self.gvt}")
        undone = history[i:]
        del history[i:]
        aggressive = self.config.cancellation == AGGRESSIVE
        pending = self._pending
        for mk, entry, out in undone:
            if entry is not None and not entry.dead:
                entry.processed = False
                self.n_pending += 1
                heapq.heappush(pending, (entry.key, entry.src, entry.msg_id, entry))
            if out is not None and out.state == VALID:
                if aggressive:
                    self._emit_anti(out)
                else:
                    out.state = PENDING
                    heapq.heappush(self._cancel_heap, (out.send_key, out.msg_id, out))
                    self._cancel_index[out.txn] = out
        n = len(undone)
        self.stats.rolled_back += n
        self.stats.rollbacks += 1
        coast = self._restore_to(self.hbase + i)
        if self.mode is PROVISIONAL_END and self.end_key >= undone[0][0]:
            self.mode = NORMAL
            self.end_key = None
        return RollbackReceipt(target, n, coast)

    def _restore_to(self, pos: int) -> int:
        cp_pos = self.cp_pos
        j = bisect_right(cp_pos, pos) - 1
        if j < 0:
            raise ProtocolError(f"LP{self.index}: no checkpoint at or before position {pos}")
        del cp_pos[j + 1:]
        del self.cp_state[j + 1:]
        engine = self.engine
        engine.restore(self.cp_state[j])
        start = cp_pos[j] - self.hbase
        stop = pos - self.hbase
        for k in range(start, stop):
            entry = self.history[k][1]
            if entry is None:
                engine.execute_arrival()
            else:
                engine.execute_input(entry.txn)
        n = stop - start
        self.stats.coast_forward += n
        self.work += n
        return n

    # ---------------------------------------------------------------- receive
    def handle(self, src: int, payload) -> None:
        t = type(payload)
        if t is TransactionMsg:
            self._on_transaction(src, payload)
        elif t is Ack:
            dest = self._unacked_dest.pop(payload.msg_id)
            del self._unacked[payload.msg_id]
            self._unacked_to[dest] -= 1
        elif t is AntiTransactionMsg:
            self._on_anti(src, payload)
        elif t is CancelbackMsg:
            self._on_cancelback(src, payload)
        elif t is GvtPoll:
            self.outbox.append((CONTROLLER, self.gvt_report(payload.round)))
        elif t is GvtResult:
            self.on_gvt(payload.gvt)
        elif t is EndBarrier:
            self.force_end(payload.end_key)
            self.outbox.append(
                (CONTROLLER, EndAck(self.index, self.partition_report(), self.stats.copy()))
            )
        else:
            raise ProtocolError(f"LP{self.index}: unexpected payload {payload!r}")

    def _straggler(self, key: tuple) -> None:
        history = self.history
        if history and history[-1][0][:4] >= key:
            self.rollback(key)

    def _on_transaction(self, src: int, m: TransactionMsg) -> None:
        self.stats.received += 1
        self.recv_counts[src] += 1
        if self.mode is FROZEN:
            return
        txn = m.txn
        key = (txn[0], -txn[1], txn[2], txn[3], txn[4])
        ek = key[:4]
        if ek <= self.gvt:
            self.violations.append(f"received {ek} below gvt {self.gvt}")
        entry = InputEntry(src, m.msg_id, txn, key)
        self.inputs[(src, m.msg_id)] = entry
        self._straggler(ek)
        self.n_pending += 1
        heapq.heappush(self._pending, (key, src, m.msg_id, entry))

    def _on_anti(self, src: int, m: AntiTransactionMsg) -> None:
        self.stats.anti_received += 1
        self.recv_counts[src] += 1
        if self.mode is FROZEN:
            return
        ident = (src, m.target_id)
        entry = self.inputs.pop(ident, None)
        if entry is None:
            if self.cancelled_back.pop(ident, None) is None:
                self.orphan_antis[ident] = m
            return
        if entry.processed:
            self.rollback(entry.key[:4])
        entry.dead = True
        self.n_pending -= 1

    def _on_cancelback(self, src: int, m: CancelbackMsg) -> None:
        self.stats.cancelbacks_received += 1
        self.recv_counts[src] += 1
        if self.mode is FROZEN:
            return
        out = self.output.pop(m.target_id, None)
        if out is None:
            return  # already cancelled by an anti-transaction
        if out.state == PENDING:
            self._cancel_index.pop(out.txn, None)
            out.state = DEAD
            return
        out.state = DEAD
        self.rollback(out.send_key[:4])

    def _send_cancelbacks(self, count: int) -> int:
        live = [item for item in self._pending if not item[3].dead and not item[3].processed]
        live.sort(reverse=True, key=lambda item: item[0])
        sent = 0
        for _, src, msg_id, entry in live[:count]:
            entry.dead = True
            self.n_pending -= 1
            del self.inputs[(src, msg_id)]
            self.cancelled_back[(src, msg_id)] = entry.key[:4]
            self._post(src, CancelbackMsg(self._new_id(), msg_id, entry.txn), entry.key[:4])
            self.stats.cancelbacks_sent += 1
            sent += 1
        return sent

    # -------------------------------------------------------------------- GVT
    def local_min(self) -> tuple:
        best = INF_KEY
        if self.mode is NORMAL or self.mode is CANCELBACK:
            ak = self.engine.peek()
            if ak is not None:
                best = ak[:4]
        pending = self._pending
        while pending and (pending[0][3].dead or pending[0][3].processed):
            heapq.heappop(pending)
        if pending and pending[0][0][:4] < best:
            best = pending[0][0][:4]
        heap = self._cancel_heap
        while heap and heap[0][2].state != PENDING:
            heapq.heappop(heap)
        if heap and heap[0][0][:4] < best:
            best = heap[0][0][:4]
        if self._unacked:
            m = min(self._unacked.values())
            if m < best:
                best = m
        return best

    def gvt_report(self, round_id: int) -> GvtReport:
        return GvtReport(
            self.index,
            round_id,
            self.local_min(),
            tuple(self.sent_counts),
            tuple(self.recv_counts),
            tuple(self._unacked_to),
            self.end_key if self.mode is PROVISIONAL_END else None,
        )

    def on_gvt(self, gvt: tuple) -> None:
        if gvt < self.gvt:
            raise ProtocolError(f"LP{self.index}: gvt regressed from {self.gvt} to {gvt}")
        self.commit(gvt)
        self._requested = False
        if self.lpcc is not None and (self.mode is NORMAL or self.mode is CANCELBACK):
            self._evaluate_lpcc()

    def commit(self, gvt: tuple) -> int:
        """Fossil-collect everything up to ``gvt``; returns the number of newly committed moves."""
        if gvt < self.gvt:
            raise ProtocolError(f"LP{self.index}: gvt regressed from {self.gvt} to {gvt}")
        self.gvt = gvt
        self.gvt_log.append(gvt)
        history = self.history
        k = bisect_right(history, gvt, key=_ek)
        boundary = self.hbase + k
        newly = boundary - self.cpos
        if newly <= 0:
            return 0
        inputs = self.inputs
        output = self.output
        for r in range(self.cpos - self.hbase, k):
            _, entry, out = history[r]
            if entry is not None:
                inputs.pop((entry.src, entry.msg_id), None)
            if out is not None:
                output.pop(out.msg_id, None)
        self.stats.committed += newly
        self.committed_key = history[k - 1][0][:4]
        self.cpos = boundary
        cp_pos = self.cp_pos
        j = bisect_right(cp_pos, boundary) - 1
        if j > 0:
            del cp_pos[:j]
            del self.cp_state[:j]
        drop = cp_pos[0] - self.hbase
        if drop > 0:
            del history[:drop]
            self.hbase = cp_pos[0]
        if self.cancelled_back:
            self.cancelled_back = {k2: v for k2, v in self.cancelled_back.items() if v > gvt}
        return newly

    # -------------------------------------------------------------------- end
    def force_end(self, end_key: tuple) -> int:
        """Discard every move after ``end_key``, commit the rest and freeze."""
        history = self.history
        i = bisect_right(history, end_key, key=_mk)
        discarded = len(history) - i
        if self.hbase + i < self.cpos:
            raise ProtocolError(f"LP{self.index}: end key {end_key} lies below committed moves")
        if discarded:
            del history[i:]
            self._restore_to(self.hbase + i)
        self.stats.discarded += discarded
        self.stats.committed += self.hbase + i - self.cpos
        if self.hbase + i > self.cpos:
            self.committed_key = history[i - 1][0][:4]
        self.cpos = self.hbase + i
        self.mode = FROZEN
        return discarded

    def partition_report(self) -> PartitionReport:
        return PartitionReport(self.name, self.engine.counter, tuple(self.engine.entries))

    # ------------------------------------------------------------------- LPCC
    def _evaluate_lpcc(self) -> None:
        self._since_eval = 0
        lpcc = self.lpcc
        g = self.gvt[0]
        lpcc.evaluate(
            self.stats,
            uncommitted=self.uncommitted,
            load=self.load,
            lvt=self.lvt[0],
            gvt_time=g if g >= 0 else 0,
            state_list=len(self.cp_pos),
        )
        self._enforce_window()

    def _enforce_window(self) -> None:
        lpcc = self.lpcc
        load = self.load
        limit = lpcc.actuator
        h = lpcc.config.hysteresis
        if self.mode is NORMAL:
            if check_window(load, limit) == CANCELBACK:
                self.mode = CANCELBACK
                self.stats.cancelback_entries += 1
                lpcc.log_cancelback(load, limit)
                self._send_cancelbacks(max(1, load - int(limit * h)))
                self.outbox.append((CONTROLLER, GvtRequest(self.index)))
        elif self.mode is CANCELBACK:
            if check_window(load, limit, in_cancelback=True, hysteresis=h) == NORMAL:
                self.mode = NORMAL
            elif self.n_pending:
                self._send_cancelbacks(load - int(limit * h))
                if check_window(self.load, limit, in_cancelback=True, hysteresis=h) == NORMAL:
                    self.mode = NORMAL


def _txn_ek(txn: Transaction) -> tuple:
    return (txn[0], -txn[1], txn[2], txn[3])
