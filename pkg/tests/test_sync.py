import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpsswarp.kernel import INF_KEY, MIN_KEY, compile_model, run_sequential, sequential_end_state
from gpsswarp.messages import EndAck, EndBarrier, GvtPoll, GvtReport, GvtRequest, GvtResult
from gpsswarp.model import parse_text
from gpsswarp.parallel import ParallelConfig, run_parallel
from gpsswarp.stats import LpStats
from gpsswarp.sync import (
    Confirmed,
    Controller,
    NotYet,
    Retry,
    assemble_report,
    compute_gvt,
    confirm_end,
    force_end_synchronisation,
    predecessor,
)
from gpsswarp.timewarp import FROZEN, LogicalProcess, LpConfig

from helpers import bundled, random_model


def rep(lp, local_min, sent=(0, 0), received=(0, 0), unacked=(0, 0), end=None, round_id=1):
    return GvtReport(lp, round_id, local_min, sent, received, unacked, end)


class FakeClock:
    def __init__(self):
        self.t = 0.0

    def __call__(self):
        return self.t


def test_gvt_is_minimum_of_balanced_reports():
    r = compute_gvt([rep(0, (10, 0, 0, 3)), rep(1, (7, 0, 1, 2))])
    assert r.gvt[0] == 7
    assert r.gvt == (7, 0, 1, 1)


def test_in_flight_message_is_covered_by_sender():
    # LP0 sent one message with key time 5 that LP1 has not received yet
    reports = [
        rep(0, (5, 0, 0, 4), sent=(0, 1), unacked=(0, 1)),
        rep(1, (12, 0, 1, 0), received=(0, 0)),
    ]
    assert compute_gvt(reports).gvt[0] == 5


def test_in_flight_but_acknowledged_is_retried():
    reports = [rep(0, (9, 0, 0, 0), sent=(0, 1), unacked=(0, 0)), rep(1, (12, 0, 1, 0))]
    assert isinstance(compute_gvt(reports), Retry)


def test_inconsistent_cut_is_retried():
    reports = [rep(0, (9, 0, 0, 0), sent=(0, 1)), rep(1, (12, 0, 1, 0), received=(2, 0))]
    assert isinstance(compute_gvt(reports), Retry)


def test_missing_report_is_retried():
    r = compute_gvt([rep(0, (9, 0, 0, 0))], n_lps=2)
    assert isinstance(r, Retry) and "LP [1]" in r.reason


def test_drained_system_gives_infinite_gvt_and_confirms():
    r = compute_gvt([rep(0, INF_KEY, end=(100, 0, 0, 99, 0)), rep(1, INF_KEY)])
    assert r.gvt == INF_KEY
    assert confirm_end(r, [(0, (100, 0, 0, 99, 0)), (1, None)]) == Confirmed((100, 0, 0, 99, 0))


def test_predecessor():
    assert predecessor((7, 0, 1, 2)) == (7, 0, 1, 1)
    assert predecessor(INF_KEY) == INF_KEY
    assert predecessor((3, 0, 0, 0)) < (3, 0, 0, 0)


@settings(max_examples=200)
@given(st.tuples(st.integers(0, 50), st.integers(-2, 0), st.integers(0, 3), st.integers(0, 50)), st.data())
def test_predecessor_is_tight(key, data):
    p = predecessor(key)
    other = data.draw(st.tuples(st.integers(0, 50), st.integers(-2, 0), st.integers(0, 3), st.integers(-1, 50)))
    assert p < key
    assert not (p < other < key)


def test_end_confirmation_boundary():
    e = (100, 0, 0, 99, 0)
    assert confirm_end(GvtResult((100, 0, 0, 99), 1), [(1, e)]) == Confirmed(e)
    assert confirm_end(GvtResult((99, 0, 5, 500), 1), [(1, e)]) == NotYet(e)


def test_earliest_end_wins():
    ends = [(0, (100, 0, 0, 99, 0)), (1, (80, 0, 1, 19, 0))]
    assert confirm_end(GvtResult((90, 0, 0, 0), 1), ends) == Confirmed((80, 0, 1, 19, 0))


def test_no_pending_end():
    assert confirm_end(GvtResult((90, 0, 0, 0), 1), [(0, None)]) == NotYet(None)


TWO = "PARTITION A,1000\nGENERATE 1,0\nTERMINATE 1\nPARTITION B,1000\nGENERATE 3,0\nTERMINATE 1\n"


def lps_for(text, **cfg):
    progs = compile_model(parse_text(text))
    return [LogicalProcess(p, len(progs), seed=2, config=LpConfig(**cfg)) for p in progs]


def test_force_end_rolls_back_the_lp_that_is_ahead():
    a, b = lps_for(TWO, checkpoint_interval=4)
    a.step(150)
    b.step(10)
    e = (30, 0, 1, 9, 0)
    assert force_end_synchronisation([a, b], e) == [120, 0]
    assert a.engine.clock == 30 and a.engine.entries[1] == 30
    assert b.engine.clock == 30 and b.engine.entries[1] == 10
    assert a.mode is FROZEN and b.mode is FROZEN
    for lp in (a, b):
        assert lp.stats.reconciles()


def test_force_end_at_exact_key_is_a_noop():
    (a,) = lps_for("PARTITION A,1000\nGENERATE 1,0\nTERMINATE 1\n")
    a.step(5)
    before = a.canonical()
    assert a.force_end((5, 0, 0, 4, 0)) == 0
    assert a.canonical() == before


def test_parallel_first_listing_matches_sequential():
    model = bundled("model_a.gps")
    result = run_parallel(model, ParallelConfig(seed=4))
    seq = run_sequential(model, 4)
    assert result.report.outcome() == seq.outcome()
    assert result.report.partitions[1].counter == 0
    assert result.report.partitions[1].entries[1] == 20000
    assert [lp.canonical() for lp in result.lps] == sequential_end_state(model, 4)
    assert result.violations() == []


def test_single_partition_report_equals_sequential():
    model = parse_text("PARTITION P,50\nGENERATE 2,1\nTERMINATE 1\n")
    result = run_parallel(model, ParallelConfig(seed=9))
    assert result.report.outcome() == run_sequential(model, 9).outcome()


def test_assemble_report_shape():
    stats = LpStats(executed=10, committed=8, rolled_back=2)
    a = run_sequential(parse_text(TWO), 0)
    r = assemble_report(a.partitions, [stats, LpStats()], a.end_key, 12.5, meta={"x": 1})
    assert r.end_clock == a.end_key[0] and r.lp_stats[0].committed == 8
    text = r.render_text()
    assert "committed" in text.lower() and "rolled back" in text.lower()


# ---------------------------------------------------------------- controller


def drain(ctl):
    out = list(ctl.outbox)
    ctl.outbox.clear()
    return out


def test_controller_polls_on_period_and_on_request():
    clk = FakeClock()
    ctl = Controller(2, gvt_period_ms=50, clock=clk)
    ctl.tick()
    assert drain(ctl) == []
    assert ctl.time_to_poll() == pytest.approx(0.05)
    clk.t = 0.06
    ctl.tick()
    assert drain(ctl) == [(0, GvtPoll(1)), (1, GvtPoll(1))]
    ctl.handle(0, rep(0, (5, 0, 0, 0)))
    ctl.handle(1, rep(1, (3, 0, 1, 0)))
    out = drain(ctl)
    assert out == [(0, GvtResult((3, 0, 1, -1), 1)), (1, GvtResult((3, 0, 1, -1), 1))]
    ctl.handle(1, GvtRequest(1))
    assert ctl.time_to_poll() == 0.0
    ctl.tick()
    assert [p for _, p in drain(ctl)] == [GvtPoll(2), GvtPoll(2)]


def test_controller_retries_and_ignores_stale_reports():
    clk = FakeClock()
    ctl = Controller(2, clock=clk)
    ctl.request_pending = True
    ctl.tick()
    drain(ctl)
    ctl.handle(0, rep(0, (5, 0, 0, 0), round_id=0))  # stale
    assert ctl.reports == {}
    ctl.handle(0, rep(0, (5, 0, 0, 0), sent=(0, 1), unacked=(0, 0)))
    ctl.handle(1, rep(1, (7, 0, 1, 0)))
    assert ctl.retries == 1 and ctl.gvt_log == []
    ctl.tick()
    assert [p for _, p in drain(ctl)] == [GvtPoll(2), GvtPoll(2)]


def test_controller_sends_barrier_then_collects_acks():
    ctl = Controller(2, clock=FakeClock())
    ctl.request_pending = True
    ctl.tick()
    drain(ctl)
    e = (4, 0, 0, 3, 0)
    ctl.handle(0, rep(0, INF_KEY, end=e))
    ctl.handle(1, rep(1, (9, 0, 1, 0)))
    assert drain(ctl) == [(0, EndBarrier(e)), (1, EndBarrier(e))]
    assert ctl.end_key == e
    a = run_sequential(parse_text(TWO), 0)
    for i in range(2):
        assert not ctl.done
        ctl.handle(i, EndAck(i, a.partitions[i], LpStats()))
    assert ctl.done
    assert ctl.report(1.0).end_key == e


def test_controller_records_regressions():
    ctl = Controller(1, clock=FakeClock())
    for key in [(9, 0, 0, 0), (4, 0, 0, 0)]:
        ctl.request_pending = True
        ctl.tick()
        drain(ctl)
        ctl.handle(0, GvtReport(0, ctl.round, key, (0,), (0,), (0,), None))
    assert len(ctl.regressions) == 1 and ctl.gvt == (9, 0, 0, -1)


def test_controller_rejects_unknown_payload():
    with pytest.raises(ValueError):
        Controller(1, clock=FakeClock()).handle(0, "hello")
    with pytest.raises(ValueError):
        Controller(1, gvt_period_ms=0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 1000), st.integers(0, 1000))
def test_gvt_monotonic_and_end_correct(model_seed, seed, interleaving):
    model = random_model(model_seed)
    result = run_parallel(model, ParallelConfig(seed=seed, interleaving_seed=interleaving, gvt_period_ms=1))
    gvts = [g for _, g in result.controller.gvt_log]
    assert gvts == sorted(gvts)
    assert all(g >= MIN_KEY for g in gvts)
    assert result.report.outcome() == run_sequential(model, seed).outcome()
    assert result.violations() == []
