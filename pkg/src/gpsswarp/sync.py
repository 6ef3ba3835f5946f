"""Simulation controller: GVT rounds, end confirmation and the final barrier.

GVT snapshot
    The controller polls every LP.  Each LP answers with its local minimum
    (earliest key it could still execute, receive back or cancel) and its
    cumulative per-peer message counts, including how many of its sends are
    still unacknowledged.  With FIFO channels the in-transit messages of a
    pair are the last ``sent - received`` ones the sender issued, so when the
    sender still counts at least that many as unacknowledged their keys are
    already in its local minimum.  A round is accepted when no pair shows a
    message received but not yet sent (an inconsistent cut) and every
    in-transit message is covered that way; otherwise the controller polls
    again.

The published GVT is the largest event key that can no longer change: the
predecessor of the smallest local minimum.  Keys are integer tuples, so that
predecessor is exact and every move whose event key is <= GVT is final.

End
    LPs whose partition counter dropped to zero report the provisional end
    key.  The earliest one is confirmed once the GVT reaches it; the
    controller then sends an end barrier instead of the GVT and every LP
    discards the moves that follow the end key and freezes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Iterable

from .kernel.entities import INF_KEY, MIN_KEY
from .messages import EndAck, EndBarrier, GvtPoll, GvtReport, GvtRequest, GvtResult
from .report import FinalReport, PartitionReport
from .stats import LpStats


@dataclass(frozen=True)
class Retry:
    reason: str


@dataclass(frozen=True)
class Confirmed:
    end_key: tuple


@dataclass(frozen=True)
class NotYet:
    end_key: tuple | None = None


def compute_gvt(reports: Iterable[GvtReport], n_lps: int | None = None, round_id: int = 0) -> GvtResult | Retry:
    by_lp = {r.lp: r for r in reports}
    n = n_lps if n_lps is not None else len(by_lp)
    missing = [i for i in range(n) if i not in by_lp]
    if missing:
        return Retry(f"no report from LP {missing}")
    for i in range(n):
        ri = by_lp[i]
        for j in range(n):
            if i == j:
                continue
            in_transit = ri.sent[j] - by_lp[j].received[i]
            if in_transit < 0:
                return Retry(f"LP{j} received from LP{i} more than LP{i} reports sent")
            if in_transit > ri.unacked[j]:
                return Retry(f"{in_transit} message(s) LP{i}->LP{j} in transit but acknowledged")
    return GvtResult(predecessor(min(r.local_min for r in by_lp.values())), round_id, None)


def predecessor(key: tuple) -> tuple:
    """Largest event key strictly below ``key``."""
    if key == INF_KEY:
        return key
    return (key[0], key[1], key[2], key[3] - 1)


def confirm_end(result: GvtResult, pending_ends: Iterable[tuple[int, tuple]]) -> Confirmed | NotYet:
    ends = [e for _, e in pending_ends if e is not None]
    if not ends:
        return NotYet(None)
    e = min(ends)
    return Confirmed(e) if tuple(e[:4]) <= tuple(result.gvt) else NotYet(e)


def force_end_synchronisation(lps, end_key: tuple) -> list[int]:
    """Apply the end barrier to in-process LPs; returns the moves each discarded."""
    return [lp.force_end(end_key) for lp in lps]


def assemble_report(
    partitions: Iterable[PartitionReport],
    stats: Iterable[LpStats],
    end_key: tuple,
    wall_ms: float,
    engine: str = "parallel",
    meta: dict | None = None,
) -> FinalReport:
    return FinalReport(tuple(partitions), end_key[0], tuple(end_key), tuple(stats), wall_ms, engine, dict(meta or {}))


class Controller:
    """Single-owner state machine; talks to LPs only through ``outbox``."""

    def __init__(self, n_lps: int, gvt_period_ms: float = 50.0, clock: Callable[[], float] = time.perf_counter):
        if gvt_period_ms <= 0:
            raise ValueError("gvt period must be positive")
        self.n_lps = n_lps
        self.period = gvt_period_ms / 1000.0
        self.clock = clock
        self.outbox: list = []
        self.round = 0
        self.polling = False
        self.reports: dict[int, GvtReport] = {}
        self.next_poll = clock() + self.period
        self.request_pending = False
        self.gvt = MIN_KEY
        self.gvt_log: list[tuple] = []  # (round, gvt) for every published result
        self.retries = 0
        self.regressions: list[str] = []
        self.end_key: tuple | None = None
        self.end_acks: dict[int, EndAck] = {}
        self.done = False

    def tick(self) -> None:
        if self.polling or self.end_key is not None:
            return
        if self.request_pending or self.clock() >= self.next_poll:
            self._poll()

    def time_to_poll(self) -> float:
        """Seconds until the next scheduled poll (0 if one is due)."""
        if self.polling or self.end_key is not None:
            return float("inf")
        if self.request_pending:
            return 0.0
        return max(0.0, self.next_poll - self.clock())

    def _poll(self) -> None:
        self.round += 1
        self.polling = True
        self.request_pending = False
        self.reports = {}
        for lp in range(self.n_lps):
            self.outbox.append((lp, GvtPoll(self.round)))

    def handle(self, src: int, payload) -> None:
        t = type(payload)
        if t is GvtReport:
            if payload.round != self.round or not self.polling:
                return
            self.reports[payload.lp] = payload
            if len(self.reports) == self.n_lps:
                self._finish_round()
        elif t is GvtRequest:
            self.request_pending = True
        elif t is EndAck:
            self.end_acks[payload.lp] = payload
            if len(self.end_acks) == self.n_lps:
                self.done = True
        else:
            raise ValueError(f"controller: unexpected payload {payload!r}")

    def _finish_round(self) -> None:
        self.polling = False
        self.next_poll = self.clock() + self.period
        reports = list(self.reports.values())
        result = compute_gvt(reports, self.n_lps, self.round)
        if isinstance(result, Retry):
            self.retries += 1
            self.request_pending = True
            return
        if result.gvt < self.gvt:
            self.regressions.append(f"round {self.round}: {result.gvt} < {self.gvt}")
            return
        decision = confirm_end(result, [(r.lp, r.provisional_end) for r in reports])
        if isinstance(decision, Confirmed):
            self.end_key = decision.end_key
            self.gvt_log.append((self.round, result.gvt))
            for lp in range(self.n_lps):
                self.outbox.append((lp, EndBarrier(decision.end_key)))
            return
        if result.gvt == INF_KEY:  # pragma: no cover - every drained system has a pending end
            raise RuntimeError("all LPs drained without a provisional end")
        self.gvt = result.gvt
        self.gvt_log.append((self.round, result.gvt))
        published = GvtResult(result.gvt, self.round, None)
        for lp in range(self.n_lps):
            self.outbox.append((lp, published))

    def report(self, wall_ms: float, meta: dict | None = None) -> FinalReport:
        acks = [self.end_acks[i] for i in range(self.n_lps)]
        return assemble_report(
            (a.partition for a in acks), (a.stats for a in acks), self.end_key, wall_ms, "parallel", meta
        )
