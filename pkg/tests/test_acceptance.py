"""Acceptance criteria 1-9, each run at its stated tolerance.

Every test prints one ``CRITERION n PASS|FAIL`` line so that the suite doubles
as a readable acceptance report under ``pytest -v``.
"""

import random
import statistics
import time

import pytest

from gpsswarp.kernel import ENGINES, Transaction, compile_model, run_sequential, sequential_end_state
from gpsswarp.lpcc import LpccConfig, parse_trace
from gpsswarp.messages import TransactionMsg
from gpsswarp.model import Generate, parse_text
from gpsswarp.parallel import MoveBudgetExceeded, ParallelConfig, run_parallel
from gpsswarp.timewarp import LogicalProcess, LpConfig

from helpers import BUNDLED, bundled, random_model

RANDOM_MODEL_SEEDS = (11, 22, 33, 44, 55)
RNG_SEEDS = (0, 1, 2, 3, 4)
INTERLEAVINGS = (0, 101, 202)


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n} {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail

    return emit


# ------------------------------------------------------------ shared runs


@pytest.fixture(scope="module")
def oracle_runs():
    """Every run of criterion 1, kept for criteria 3 and 6."""
    models = [(name, bundled(name)) for name in BUNDLED]
    models += [(f"random{s}", random_model(s)) for s in RANDOM_MODEL_SEEDS]
    runs = []
    started = time.perf_counter()
    for name, model in models:
        for seed in RNG_SEEDS:
            expected = run_sequential(model, seed).outcome()
            for inter in INTERLEAVINGS:
                for lpcc in (None, LpccConfig()):
                    cfg = ParallelConfig(seed=seed, interleaving_seed=inter, lpcc=lpcc)
                    result = run_parallel(model, cfg)
                    runs.append((name, seed, inter, lpcc is not None, result, expected))
    return runs, time.perf_counter() - started, len(models)


@pytest.fixture(scope="module")
def table_runs():
    """Criterion 2: the first listing in concurrent mode, LPCC on and off."""
    model = bundled("model_a.gps")
    out = {True: [], False: []}
    durations = []
    for seed in range(9):
        for on in (True, False):
            t0 = time.perf_counter()
            r = run_parallel(model, ParallelConfig(seed=seed, transport="concurrent", lpcc=LpccConfig() if on else None))
            durations.append(time.perf_counter() - t0)
            out[on].append(r)
    return out, durations


# --------------------------------------------------------------- criteria


def test_criterion_1_oracle_equivalence(oracle_runs, verdict):
    runs, elapsed, n_models = oracle_runs
    bad = [(n, s, i, on) for n, s, i, on, r, exp in runs if r.report.outcome() != exp]
    ok = n_models >= 8 and not bad and elapsed < 120.0
    verdict(1, ok, f"{len(runs)} parallel runs over {n_models} models, {len(bad)} mismatches, {elapsed:.1f}s (< 120s)")


def test_criterion_2_rollback_reduction(table_runs, verdict):
    out, durations = table_runs
    # the reference statistics are those of LP2, the LP that receives the stragglers
    on = [r.report.lp_stats[1].rolled_back for r in out[True]]
    off = [r.report.lp_stats[1].rolled_back for r in out[False]]
    m_on, m_off = statistics.median(on), statistics.median(off)
    reduction = 1.0 - m_on / m_off if m_off else 0.0
    both_on = statistics.median(sum(s.rolled_back for s in r.report.lp_stats) for r in out[True])
    both_off = statistics.median(sum(s.rolled_back for s in r.report.lp_stats) for r in out[False])
    expected = run_sequential(bundled("model_a.gps"), 0).outcome()
    correct = out[True][0].report.outcome() == expected and out[False][0].report.outcome() == expected
    ok = reduction >= 0.05 and max(durations) < 60.0 and correct
    verdict(
        2,
        ok,
        f"LP2 median rolled back {m_on:.0f} (on) vs {m_off:.0f} (off) over {len(on)} seeds: "
        f"{100 * reduction:.1f}% reduction (>= 5%); all LPs {both_on:.0f} vs {both_off:.0f}; "
        f"slowest run {max(durations):.1f}s",
    )


def test_criterion_3_accounting_identity(oracle_runs, table_runs, verdict):
    reference = [(19639, 70331, 90330), (19953, 77726, 97725)]
    remainders = [total - committed - rolled for committed, rolled, total in reference]
    results = [r for *_, r, _ in oracle_runs[0]] + table_runs[0][True] + table_runs[0][False]
    broken = []
    for r in results:
        for i, s in enumerate(r.report.lp_stats):
            if s.executed != s.committed + s.rolled_back + s.discarded:
                broken.append((i, s))
    ok = not broken and remainders == [360, 46] and all(x >= 0 for x in remainders)
    verdict(3, ok, f"executed == committed + rolled back + discarded in {len(results)} runs, {len(broken)} violations")


def test_criterion_4_cancelback_pathology(verdict):
    model = bundled("model_b.gps")
    rows = []
    ok = True
    for seed in (0, 1, 2):
        on = run_parallel(model, ParallelConfig(seed=seed, lpcc=LpccConfig()))
        off = run_parallel(model, ParallelConfig(seed=seed))
        lp2_on, lp2_off = on.report.lp_stats[1], off.report.lp_stats[1]
        rows.append((lp2_on.cancelback_entries, lp2_on.cancelbacks_sent, lp2_off.rollbacks))
        ok &= lp2_on.cancelback_entries >= 1 and lp2_on.cancelbacks_sent >= 1 and lp2_off.rollbacks == 0
        ok &= on.report.outcome() == off.report.outcome() == run_sequential(model, seed).outcome()
    verdict(4, ok, f"LP2 (cancelback entries, cancelbacks sent, rollbacks with LPCC off) per seed: {rows}")


def test_criterion_5_zero_delay_loop(verdict):
    model = bundled("loop.gps")
    lazy = run_parallel(model, ParallelConfig(move_budget=10_000_000))
    lazy_moves = sum(s.executed for s in lazy.report.lp_stats)
    lazy_ok = lazy.report.outcome() == run_sequential(model, 0).outcome()
    try:
        run_parallel(model, ParallelConfig(cancellation="aggressive", move_budget=100_000))
        aggressive = "terminated"
    except MoveBudgetExceeded as exc:
        aggressive = f"exceeded budget after {exc.moves} moves"
    ok = lazy_ok and aggressive.startswith("exceeded")
    verdict(5, ok, f"lazy finished in {lazy_moves} moves (budget 10M); aggressive {aggressive} (budget 100k)")


def test_criterion_6_gvt_safety(oracle_runs, verdict):
    runs = oracle_runs[0]
    regress = late = antis = other = 0
    for *_, r, _ in runs:
        log = [g for _, g in r.controller.gvt_log]
        regress += sum(1 for a, b in zip(log, log[1:]) if b < a) + len(r.controller.regressions)
        late += len(r.safety.late_deliveries)
        antis += len(r.safety.late_antis)
        other += sum(len(lp.violations) for lp in r.lps)
    rounds = sum(len(r.controller.gvt_log) for *_, r, _ in runs)
    ok = regress == late == antis == other == 0 and rounds > 0
    verdict(
        6,
        ok,
        f"{rounds} GVT rounds in {len(runs)} runs: {regress} regressions, {late} late deliveries, "
        f"{antis} anti-transactions at or below GVT, {other} other violations",
    )


def _frontier_lp(rng: random.Random, backend: str):
    """An LP stopped at a frontier whose next move is strictly later than its last one."""
    while True:
        model = random_model(rng.randrange(10**6), partitions=2)
        prog = compile_model(model)[0]
        interval = rng.randint(1, 8)
        lp = LogicalProcess(prog, 2, rng.randrange(2**32), LpConfig(checkpoint_interval=interval), backend=backend)
        lp.step(rng.randint(0, 40))
        for _ in range(200):
            if lp.mode != "normal":
                break
            k = lp.engine.peek()
            last = lp.history[-1][0][0] if lp.history else -1
            if k[0] > last:
                return model, lp, k, interval
            lp.step(1)
        # the partition ended first; draw another case


def _straggler_case(rng: random.Random, backend: str) -> str | None:
    model, lp, k, interval = _frontier_lp(rng, backend)
    saved = lp.canonical()
    lp.step(rng.randint(1, 60))
    # a higher-priority transaction at the frontier time sorts just before the frontier key
    target_block = next(b for b, blk in enumerate(model.partitions[0].blocks) if not isinstance(blk, Generate))
    straggler = Transaction(k[0], 1, 1, rng.randrange(10**6), 1, 0, target_block, 1)
    lp.handle(1, TransactionMsg(10**9, straggler))
    if lp.history and lp.history[-1][0][:4] >= (k[0], -1, 1, straggler.seq):
        return "frontier not restored"
    if lp.canonical() != saved:
        return f"state mismatch (interval {interval})"
    return None


def test_criterion_7_rollback_exactness(verdict):
    rng = random.Random(20240607)
    backends = sorted(ENGINES)
    failures = []
    for case in range(1000):
        problem = _straggler_case(rng, backends[case % len(backends)])
        if problem:
            failures.append((case, problem))
    verdict(7, not failures, f"1000 straggler rollbacks over backends {backends}: {len(failures)} mismatches {failures[:3]}")


def test_criterion_8_actuator_trace(verdict, tmp_path):
    result = run_parallel(bundled("model_a.gps"), ParallelConfig(seed=0, lpcc=LpccConfig()))
    path = tmp_path / "model_a_actuator_lp2.csv"
    path.write_text(result.lps[1].lpcc.trace_csv())
    rows = parse_trace(path.read_text())
    acts = [row[2] for row in rows]
    transitions = sum(1 for a, b in zip(acts, acts[1:]) if a is None and b is not None)
    bounded = sorted({a for a in acts if a is not None})
    verdict(8, transitions >= 1, f"LP2 trace has {len(rows)} rows, {transitions} Unlimited->bounded transition(s), limits {bounded[:5]}")


EARLY_FINISH = """\
PARTITION Early,40
        GENERATE 2,1
        TRANSFER 0.5,Late
        TERMINATE 1
PARTITION Far,1000000
        GENERATE 1,0
        TERMINATE 1
Late    TERMINATE 0
"""


def test_criterion_9_provisional_end(verdict):
    cases = [(parse_text(EARLY_FINISH), {0: 400}, s) for s in range(3)]
    cases += [(random_model(s), {s % 2: 300}, s) for s in (5, 6, 7, 8)]
    bad = []
    ahead = 0
    for model, starve, seed in cases:
        r = run_parallel(model, ParallelConfig(seed=seed, starve=starve))
        seq = run_sequential(model, seed)
        if r.controller.end_key != seq.end_key:
            bad.append(("end key", seed))
        if [lp.canonical() for lp in r.lps] != sequential_end_state(model, seed):
            bad.append(("state", seed))
        ahead += any(s.discarded > 0 for s in r.report.lp_stats)
    ok = not bad and ahead >= 3
    verdict(9, ok, f"{len(cases)} runs, {ahead} with an LP ahead of the end key, mismatches: {bad}")
