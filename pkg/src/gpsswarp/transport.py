"""In-process message transport and the two runners that drive a system.

Endpoints are LP ordinals ``0..n-1`` plus ``CONTROLLER``.  Every ordered pair
of endpoints is a FIFO channel with contiguous sequence numbers.  Delivering
a transaction, anti-transaction or cancelback produces an ``Ack`` back to the
sender on the reverse channel.

``run_deterministic`` drives everything from one thread under a seeded
schedule and a virtual clock, so a run is a pure function of its inputs.
``run_concurrent`` gives each LP and the controller a thread of its own.
"""

from __future__ import annotations

import math
import queue
import random
import sys
import threading
from collections import deque
from dataclasses import dataclass, field

from .kernel.sequential import MoveBudgetExceeded
from .messages import CONTROLLER, PAYLOAD_MESSAGES, Ack, AntiTransactionMsg, to_wire
from .timewarp import FROZEN

DETERMINISTIC = "deterministic"
CONCURRENT = "concurrent"

# virtual time charged per unit of work (a move, a coast-forward step, a delivery)
UNIT_SECONDS = 1e-5


class TransportError(RuntimeError):
    pass


@dataclass(frozen=True, slots=True)
class Envelope:
    src: int
    dst: int
    seq: int
    payload: object


@dataclass
class DeliveryPolicy:
    mode: str = DETERMINISTIC
    interleaving_seed: int = 0
    max_burst: int = 32
    delays: dict = field(default_factory=dict)  # (src, dst) -> ticks, deterministic mode only
    starve: dict = field(default_factory=dict)  # lp -> number of scheduling rounds it is skipped
    trace: bool = False
    # concurrent mode: interpreter thread switch interval in seconds while the run lasts
    switch_interval: float | None = 0.001

    def __post_init__(self):
        if self.mode not in (DETERMINISTIC, CONCURRENT):
            raise ValueError(f"unknown transport mode {self.mode!r}")
        if self.max_burst < 1:
            raise ValueError("max_burst must be at least 1")
        if any(d < 0 for d in self.delays.values()):
            raise ValueError("channel delays must be non-negative")
        if self.switch_interval is not None and self.switch_interval <= 0:
            raise ValueError("switch interval must be positive")


class VirtualClock:
    """Seconds derived from a count of work units."""

    def __init__(self):
        self.units = 0

    def __call__(self) -> float:
        return self.units * UNIT_SECONDS


@dataclass
class SafetyLog:
    """Observations made by the transport while a run is in progress."""

    deliveries: int = 0
    acks: int = 0
    late_deliveries: list = field(default_factory=list)  # payload key <= gvt published before delivery
    late_antis: list = field(default_factory=list)  # anti emitted for a key <= published gvt
    trace: list = field(default_factory=list)


def payload_key(payload) -> tuple:
    txn = payload.txn
    return (txn[0], -txn[1], txn[2], txn[3])


class _Endpoints:
    def __init__(self, n_lps: int):
        self.n = n_lps
        self.ids = list(range(n_lps)) + [CONTROLLER]

    def check(self, ep: int) -> None:
        if not (ep == CONTROLLER or 0 <= ep < self.n):
            raise TransportError(f"unknown endpoint {ep}")


class DeterministicTransport:
    """FIFO channels with optional fixed per-channel delays, in virtual ticks."""

    def __init__(self, n_lps: int, clock: VirtualClock, delays: dict | None = None, rng: random.Random | None = None):
        self.endpoints = _Endpoints(n_lps)
        self.clock = clock
        self.delays = dict(delays or {})
        self.rng = rng or random.Random(0)
        self.channels: dict = {}
        self.next_seq: dict = {}
        self.expected: dict = {}
        self.inbound: dict = {ep: [] for ep in self.endpoints.ids}
        for src in self.endpoints.ids:
            for dst in self.endpoints.ids:
                if src != dst:
                    self.channels[(src, dst)] = deque()
                    self.next_seq[(src, dst)] = 0
                    self.expected[(src, dst)] = 0
                    self.inbound[dst].append((src, dst))
        self.last_due: dict = {k: 0 for k in self.channels}

    def send(self, src: int, dst: int, payload) -> Envelope:
        self.endpoints.check(src)
        self.endpoints.check(dst)
        ch = (src, dst)
        env = Envelope(src, dst, self.next_seq[ch], payload)
        self.next_seq[ch] += 1
        due = self.clock.units + self.delays.get(ch, 0)
        if due < self.last_due[ch]:
            due = self.last_due[ch]
        self.last_due[ch] = due
        self.channels[ch].append((due, env))
        return env

    def receive(self, dst: int) -> Envelope | None:
        """Pop one due envelope for ``dst``; the source channel is picked at random."""
        now = self.clock.units
        ready = [ch for ch in self.inbound[dst] if self.channels[ch] and self.channels[ch][0][0] <= now]
        if not ready:
            return None
        ch = ready[0] if len(ready) == 1 else ready[self.rng.randrange(len(ready))]
        _, env = self.channels[ch].popleft()
        if env.seq != self.expected[ch]:
            raise TransportError(f"channel {ch}: expected seq {self.expected[ch]}, got {env.seq}")
        self.expected[ch] += 1
        return env

    def next_due(self) -> float:
        heads = [q[0][0] for q in self.channels.values() if q]
        return min(heads) if heads else math.inf

    def in_flight(self) -> int:
        return sum(len(q) for q in self.channels.values())


def _check_budget(lps, budget: int) -> None:
    moves = sum(lp.stats.executed for lp in lps)
    if moves > budget:
        raise MoveBudgetExceeded(budget, moves, [lp.stats.copy() for lp in lps])


def run_deterministic(lps, controller, policy: DeliveryPolicy, move_budget: int, clock: VirtualClock) -> SafetyLog:
    """Drive ``lps`` and ``controller`` to completion in the calling thread."""
    rng = random.Random(policy.interleaving_seed)
    transport = DeterministicTransport(len(lps), clock, policy.delays, random.Random(rng.getrandbits(64)))
    log = SafetyLog()
    n = len(lps)
    work = [lp.work for lp in lps]

    def post(src, dst, payload):
        env = transport.send(src, dst, payload)
        if policy.trace:
            log.trace.append(("send", env.src, env.dst, env.seq, to_wire(payload)))

    def route(src, outbox):
        for dst, payload in outbox:
            if type(payload) is AntiTransactionMsg and payload_key(payload) <= controller.gvt:
                log.late_antis.append((src, dst, payload_key(payload), controller.gvt))
            post(src, dst, payload)
        outbox.clear()

    def deliver(dst, handler):
        count = 0
        while True:
            env = transport.receive(dst)
            if env is None:
                return count
            count += 1
            payload = env.payload
            if policy.trace:
                log.trace.append(("recv", env.src, env.dst, env.seq, to_wire(payload)))
            if type(payload) in PAYLOAD_MESSAGES:
                if payload_key(payload) <= controller.gvt:
                    log.late_deliveries.append((env.src, dst, payload_key(payload), controller.gvt))
                handler(env.src, payload)
                post(dst, env.src, Ack(payload.msg_id))
                log.acks += 1
            else:
                handler(env.src, payload)
            log.deliveries += 1

    rounds = 0
    starve = dict(policy.starve)
    while not controller.done:
        start = rounds % n
        order = [(start + k) % n for k in range(n)]
        for k in range(n - 1):
            if rng.random() < 0.5:
                order[k], order[k + 1] = order[k + 1], order[k]
        rounds += 1
        busy = False
        for i in order:
            if starve.get(i, 0) > 0:
                starve[i] -= 1
                continue
            lp = lps[i]
            d = deliver(i, lp.handle)
            moved = 0
            if lp.mode is not FROZEN:
                moved = lp.step(rng.randint(1, policy.max_burst))
            route(i, lp.outbox)
            clock.units += d + (lp.work - work[i])
            work[i] = lp.work
            busy = busy or d > 0 or moved > 0
        d = deliver(CONTROLLER, controller.handle)
        clock.units += d
        controller.tick()
        busy = busy or d > 0 or bool(controller.outbox)
        route(CONTROLLER, controller.outbox)
        _check_budget(lps, move_budget)
        if not busy and not controller.done:
            # nothing runnable: jump the clock to the next delivery or poll
            target = transport.next_due()
            poll = controller.time_to_poll()
            if poll != math.inf:
                target = min(target, clock.units + math.ceil(poll / UNIT_SECONDS))
            if target == math.inf:
                raise TransportError("system is idle with nothing in flight and no poll scheduled")
            clock.units = max(clock.units + 1, int(target))
    return log


def run_concurrent(lps, controller, policy: DeliveryPolicy, move_budget: int, idle_wait: float = 0.002) -> SafetyLog:
    """One thread per LP plus one for the controller, joined by FIFO queues."""
    n = len(lps)
    endpoints = _Endpoints(n)
    inbox = {ep: queue.SimpleQueue() for ep in endpoints.ids}
    log = SafetyLog()
    stop = threading.Event()
    errors: list[BaseException] = []
    barrier = threading.Barrier(n + 1)

    class Sender:
        # sequence counters are owned by the sending thread
        def __init__(self, src):
            self.src = src
            self.seq = {ep: 0 for ep in endpoints.ids}

        def send(self, dst, payload):
            endpoints.check(dst)
            inbox[dst].put(Envelope(self.src, dst, self.seq[dst], payload))
            self.seq[dst] += 1

        def route(self, outbox):
            for dst, payload in outbox:
                self.send(dst, payload)
            outbox.clear()

    def receiver():
        expected = {}

        def check(env):
            e = expected.get(env.src, 0)
            if env.seq != e:
                raise TransportError(f"channel ({env.src},{env.dst}): expected seq {e}, got {env.seq}")
            expected[env.src] = e + 1

        return check

    def lp_main(lp):
        out = Sender(lp.index)
        check = receiver()
        box = inbox[lp.index]
        burst = policy.max_burst

        def handle(env):
            check(env)
            lp.handle(env.src, env.payload)
            if type(env.payload) in PAYLOAD_MESSAGES:
                out.send(env.src, Ack(env.payload.msg_id))

        try:
            barrier.wait()
            while not stop.is_set():
                got = 0
                while True:
                    try:
                        env = box.get_nowait()
                    except queue.Empty:
                        break
                    handle(env)
                    got += 1
                moved = lp.step(burst) if lp.mode is not FROZEN else 0
                out.route(lp.outbox)
                if lp.mode is FROZEN:
                    break
                if moved == 0 and got == 0:
                    try:
                        env = box.get(timeout=idle_wait)
                    except queue.Empty:
                        continue
                    handle(env)
                    out.route(lp.outbox)
                if sum(p.stats.executed for p in lps) > move_budget:
                    stop.set()
        except BaseException as exc:  # pragma: no cover - surfaced after join
            errors.append(exc)
            stop.set()

    def controller_main():
        out = Sender(CONTROLLER)
        check = receiver()
        box = inbox[CONTROLLER]
        try:
            barrier.wait()
            while not stop.is_set() and not controller.done:
                controller.tick()
                out.route(controller.outbox)
                wait = min(controller.time_to_poll(), 0.05)
                try:
                    env = box.get(timeout=max(wait, 1e-4))
                except queue.Empty:
                    continue
                check(env)
                controller.handle(env.src, env.payload)
                out.route(controller.outbox)
        except BaseException as exc:  # pragma: no cover - surfaced after join
            errors.append(exc)
            stop.set()

    threads = [threading.Thread(target=lp_main, args=(lp,), name=f"lp{lp.index}", daemon=True) for lp in lps]
    threads.append(threading.Thread(target=controller_main, name="controller", daemon=True))
    # the default 5 ms slices let one LP run far ahead before the others get a turn
    previous = sys.getswitchinterval()
    if policy.switch_interval is not None:
        sys.setswitchinterval(policy.switch_interval)
    try:
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    finally:
        sys.setswitchinterval(previous)
    if errors:
        raise errors[0]
    if not controller.done:
        moves = sum(lp.stats.executed for lp in lps)
        raise MoveBudgetExceeded(move_budget, moves, [lp.stats.copy() for lp in lps])
    return log
