"""Build a Time Warp system for a model and run it to its confirmed end."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .kernel.program import compile_model
from .kernel.sequential import DEFAULT_MOVE_BUDGET, MoveBudgetExceeded
from .lpcc import LpccConfig
from .model import Model
from .report import FinalReport
from .sync import Controller
from .timewarp import LAZY, LogicalProcess, LpConfig
from .transport import CONCURRENT, DETERMINISTIC, DeliveryPolicy, SafetyLog, VirtualClock, run_concurrent, run_deterministic


@dataclass
class ParallelConfig:
    seed: int = 0
    interleaving_seed: int = 0
    transport: str = DETERMINISTIC
    lpcc: LpccConfig | None = None
    cancellation: str = LAZY
    checkpoint_interval: int = 1
    gvt_period_ms: float = 50.0
    move_budget: int = DEFAULT_MOVE_BUDGET
    max_burst: int = 32
    delays: dict = field(default_factory=dict)
    starve: dict = field(default_factory=dict)
    trace: bool = False
    backend: str | None = None


@dataclass
class RunResult:
    report: FinalReport
    lps: list
    controller: Controller
    safety: SafetyLog

    @property
    def traces(self) -> dict[int, list]:
        return {lp.index: lp.lpcc.trace for lp in self.lps if lp.lpcc is not None}

    def violations(self) -> list[str]:
        """Every safety observation that should never happen."""
        out = list(self.controller.regressions)
        out += [f"late delivery {x}" for x in self.safety.late_deliveries]
        out += [f"late anti-transaction {x}" for x in self.safety.late_antis]
        for lp in self.lps:
            out += [f"LP{lp.index}: {v}" for v in lp.violations]
        return out


def build_system(model: Model, config: ParallelConfig, clock):
    programs = compile_model(model)
    lp_config = LpConfig(config.cancellation, config.checkpoint_interval)
    lps = [
        LogicalProcess(p, len(programs), config.seed, lp_config, config.lpcc, clock=clock, backend=config.backend)
        for p in programs
    ]
    return lps, Controller(len(lps), config.gvt_period_ms, clock)


def run_parallel(model: Model, config: ParallelConfig | None = None) -> RunResult:
    config = config or ParallelConfig()
    policy = DeliveryPolicy(
        config.transport, config.interleaving_seed, config.max_burst, dict(config.delays), dict(config.starve),
        config.trace,
    )
    started = time.perf_counter()
    if config.transport == DETERMINISTIC:
        clock = VirtualClock()
        lps, controller = build_system(model, config, clock)
        safety = run_deterministic(lps, controller, policy, config.move_budget, clock)
        wall_ms = clock() * 1000.0
    elif config.transport == CONCURRENT:
        lps, controller = build_system(model, config, time.perf_counter)
        safety = run_concurrent(lps, controller, policy, config.move_budget)
        wall_ms = (time.perf_counter() - started) * 1000.0
    else:
        raise ValueError(f"unknown transport {config.transport!r}")
    meta = {
        "seed": config.seed,
        "interleaving_seed": config.interleaving_seed,
        "transport": config.transport,
        "lpcc": config.lpcc is not None,
        "cancellation": config.cancellation,
        "backend": lps[0].engine.backend,
        "gvt_rounds": controller.round,
    }
    return RunResult(controller.report(round(wall_ms, 3), meta), lps, controller, safety)


__all__ = ["ParallelConfig", "RunResult", "run_parallel", "build_system", "MoveBudgetExceeded"]
