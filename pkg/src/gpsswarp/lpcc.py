"""Per-LP optimism controller.

Sensors are sampled from the LP's cumulative statistics at every evaluation
and turned into rates over the elapsed wall time.  Each rate is rescaled by
the largest value seen so far for that component, giving an indicator vector
in the unit cube.  Indicator vectors are clustered online; each cluster
remembers the best committed-move throughput observed while the LP was in
that region and the actuator that was in force at the time.  The actuator
proposed next is the one stored by the nearest cluster that did measurably
better than the present.

The actuator is a limit on uncommitted work.  ``None`` stands for Unlimited.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass
from typing import Callable

from .stats import LpStats

UNLIMITED = None
NORMAL = "normal"
CANCELBACK = "cancelback"

SENSORS = (
    "executed",
    "committed",
    "rolled_back",
    "rollbacks",
    "sent",
    "received",
    "anti_sent",
    "anti_received",
    "cancelbacks_received",
    "uncommitted",
    "lvt_advance",
    "gvt_advance",
    "state_list",
)
TRACE_HEADER = ("wall_ms", "gvt_time", "actuator", "uncommitted")


@dataclass
class LpccConfig:
    eval_every: int = 200
    merge_radius: float = 0.15
    capacity: int = 64
    improvement: float = 1.05
    hysteresis: float = 0.8
    floor: int = 16
    ceiling: int = 1 << 20

    def __post_init__(self):
        if self.eval_every < 1:
            raise ValueError("eval_every must be at least 1")
        if not 0 < self.hysteresis < 1:
            raise ValueError("hysteresis must lie strictly between 0 and 1")
        if self.capacity < 1:
            raise ValueError("capacity must be at least 1")
        if not 1 <= self.floor <= self.ceiling:
            raise ValueError("actuator bounds must satisfy 1 <= floor <= ceiling")
        if self.merge_radius < 0 or self.improvement < 1:
            raise ValueError("merge radius must be >= 0 and improvement margin >= 1")


@dataclass(frozen=True)
class SensorSnapshot:
    wall: float  # seconds
    executed: float = 0
    committed: float = 0
    rolled_back: float = 0
    rollbacks: float = 0
    sent: float = 0
    received: float = 0
    anti_sent: float = 0
    anti_received: float = 0
    cancelbacks_received: float = 0
    uncommitted: float = 0
    lvt_advance: float = 0
    gvt_advance: float = 0
    state_list: float = 0

    def values(self) -> tuple[float, ...]:
        return tuple(getattr(self, name) for name in SENSORS)


@dataclass(frozen=True)
class IndicatorVector:
    components: tuple[float, ...]
    performance: float


@dataclass
class ClusterCentroid:
    centroid: list[float]
    members: int
    best_performance: float
    actuator: int | None


@dataclass
class CancelbackEntry:
    wall_ms: float
    load: int
    limit: int


def clamp_limit(value: int, floor: int, ceiling: int) -> int:
    return max(floor, min(ceiling, int(value)))


def make_indicators(s: SensorSnapshot, maxima: list[float]) -> IndicatorVector:
    """Rates per second rescaled by running maxima; ``maxima`` is updated in place."""
    if s.wall <= 0:
        raise ValueError("observation interval must have positive wall time")
    comps = []
    for i, value in enumerate(s.values()):
        rate = value / s.wall
        if rate > maxima[i]:
            maxima[i] = rate
        comps.append(rate / maxima[i] if maxima[i] > 0 else 0.0)
    return IndicatorVector(tuple(comps), s.committed / s.wall)


def distance(a, b) -> float:
    return math.sqrt(sum((x - y) * (x - y) for x, y in zip(a, b)))


def _nearest(history: list[ClusterCentroid], v) -> tuple[int, float]:
    best, best_d = -1, math.inf
    for i, c in enumerate(history):
        d = distance(c.centroid, v)
        if d < best_d:
            best, best_d = i, d
    return best, best_d


def _merge_closest_pair(history: list[ClusterCentroid]) -> None:
    best = None
    for i in range(len(history)):
        for j in range(i + 1, len(history)):
            d = distance(history[i].centroid, history[j].centroid)
            if best is None or d < best[0]:
                best = (d, i, j)
    _, i, j = best
    a, b = history[i], history[j]
    m = a.members + b.members
    centroid = [(x * a.members + y * b.members) / m for x, y in zip(a.centroid, b.centroid)]
    keep = a if a.best_performance >= b.best_performance else b
    history[i] = ClusterCentroid(centroid, m, keep.best_performance, keep.actuator)
    del history[j]


def observe(
    history: list[ClusterCentroid],
    v: IndicatorVector,
    actuator: int | None,
    *,
    implied_limit: int = 0,
    radius: float = 0.15,
    capacity: int = 64,
    floor: int = 16,
    ceiling: int = 1 << 20,
) -> list[ClusterCentroid]:
    """Add ``v`` to the clustered history (in place) and return it.

    The actuator stored with a centroid is always bounded: while Unlimited is
    in force the observed uncommitted load stands in as the implied limit.
    """
    stored = clamp_limit(implied_limit if actuator is None else actuator, floor, ceiling)
    if history:
        i, d = _nearest(history, v.components)
        if d <= radius:
            c = history[i]
            c.members += 1
            m = c.members
            c.centroid = [x + (y - x) / m for x, y in zip(c.centroid, v.components)]
            if v.performance > c.best_performance:
                c.best_performance = v.performance
                c.actuator = stored
            return history
    if len(history) >= capacity > 1:
        _merge_closest_pair(history)
    history.append(ClusterCentroid(list(v.components), 1, v.performance, stored))
    if len(history) > capacity:
        # a single slot: fold the new vector into it
        _merge_closest_pair(history)
    return history


def propose_actuator(
    history: list[ClusterCentroid],
    v: IndicatorVector,
    current_performance: float,
    current: int | None,
    *,
    improvement: float = 1.05,
) -> int | None:
    best, best_d = None, math.inf
    threshold = current_performance * improvement
    for c in history:
        if c.best_performance > threshold:
            d = distance(c.centroid, v.components)
            if d < best_d:
                best, best_d = c, d
    return current if best is None else best.actuator


def check_window(uncommitted: int, actuator: int | None, in_cancelback: bool = False, hysteresis: float = 0.8) -> str:
    if actuator is None:
        return NORMAL
    if in_cancelback:
        return NORMAL if uncommitted <= actuator * hysteresis else CANCELBACK
    return CANCELBACK if uncommitted > actuator else NORMAL


class Lpcc:
    """Controller state owned by one LP."""

    def __init__(self, config: LpccConfig | None = None, clock: Callable[[], float] | None = None):
        self.config = config or LpccConfig()
        self.clock = clock or time.perf_counter
        self.actuator: int | None = UNLIMITED
        self.history: list[ClusterCentroid] = []
        self.maxima = [0.0] * len(SENSORS)
        self.trace: list[tuple] = []
        self.cancelbacks: list[CancelbackEntry] = []
        self._t0 = self.clock()
        self._last = None

    def _wall_ms(self, now: float) -> float:
        return round((now - self._t0) * 1000.0, 3)

    def evaluate(self, stats: LpStats, *, uncommitted: int, load: int, lvt: int, gvt_time: int, state_list: int):
        """Take one observation; returns the actuator now in force."""
        now = self.clock()
        cur = (now, stats.copy(), lvt, gvt_time)
        last = self._last
        self._last = cur
        if last is not None and now > last[0]:
            t0, s0, lvt0, gvt0 = last
            s = SensorSnapshot(
                now - t0,
                executed=stats.executed - s0.executed,
                committed=stats.committed - s0.committed,
                rolled_back=stats.rolled_back - s0.rolled_back,
                rollbacks=stats.rollbacks - s0.rollbacks,
                sent=stats.sent - s0.sent,
                received=stats.received - s0.received,
                anti_sent=stats.anti_sent - s0.anti_sent,
                anti_received=stats.anti_received - s0.anti_received,
                cancelbacks_received=stats.cancelbacks_received - s0.cancelbacks_received,
                uncommitted=uncommitted,
                lvt_advance=max(0, lvt - lvt0),
                gvt_advance=max(0, gvt_time - gvt0),
                state_list=state_list,
            )
            cfg = self.config
            v = make_indicators(s, self.maxima)
            proposal = propose_actuator(self.history, v, v.performance, self.actuator, improvement=cfg.improvement)
            observe(
                self.history, v, self.actuator, implied_limit=load, radius=cfg.merge_radius,
                capacity=cfg.capacity, floor=cfg.floor, ceiling=cfg.ceiling,
            )
            self.actuator = proposal
        elif last is not None:
            self._last = last  # no wall time elapsed; keep the older baseline
        self.trace.append((self._wall_ms(now), gvt_time, self.actuator, uncommitted))
        return self.actuator

    def log_cancelback(self, load: int, limit: int) -> None:
        self.cancelbacks.append(CancelbackEntry(self._wall_ms(self.clock()), load, limit))

    def trace_csv(self) -> str:
        return format_trace(self.trace)


def format_trace(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for wall_ms, gvt_time, actuator, uncommitted in rows:
        w.writerow((wall_ms, gvt_time, "unlimited" if actuator is None else actuator, uncommitted))
    return buf.getvalue()


def parse_trace(text: str) -> list[tuple]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != TRACE_HEADER:
        raise ValueError("not an actuator trace")
    out = []
    for wall_ms, gvt_time, actuator, uncommitted in rows[1:]:
        out.append((float(wall_ms), int(gvt_time), None if actuator == "unlimited" else int(actuator), int(uncommitted)))
    return out
