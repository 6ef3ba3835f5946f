"""Command-line entry point.

Exit codes: 0 success, 1 model or configuration error, 2 move budget
exhausted (partial statistics are printed to stderr).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from importlib.resources import files
from pathlib import Path

from .kernel.sequential import DEFAULT_MOVE_BUDGET, MoveBudgetExceeded, run_sequential
from .lpcc import LpccConfig, format_trace
from .model import Model, ModelFile, ParseError, format_model, parse_model, validate_topology
from .parallel import ParallelConfig, run_parallel
from .report import FinalReport, render_stats
from .stats import LpStats
from .timewarp import AGGRESSIVE, LAZY
from .transport import CONCURRENT, DETERMINISTIC

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_BUDGET = 2


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    model_path: str
    engine: str = "parallel"
    lpcc: bool = False
    cancellation: str = LAZY
    seed: int = 0
    interleaving_seed: int = 0
    transport: str = DETERMINISTIC
    checkpoint_interval: int = 1
    gvt_period_ms: float = 50.0
    move_budget: int | None = None
    lpcc_tuning: dict = field(default_factory=dict)
    report_path: str | None = None
    stats_path: str | None = None
    actuator_csv: str | None = None
    trace_path: str | None = None

    def validate(self) -> None:
        if self.engine not in ("sequential", "parallel"):
            raise ConfigError(f"unknown engine {self.engine!r}")
        if self.lpcc and self.engine != "parallel":
            raise ConfigError("--lpcc on requires --engine parallel")
        if self.cancellation == AGGRESSIVE and self.move_budget is None:
            raise ConfigError("--cancellation aggressive requires an explicit --move-budget")
        if self.cancellation == AGGRESSIVE and self.engine != "parallel":
            raise ConfigError("--cancellation only applies to --engine parallel")
        if self.move_budget is not None and self.move_budget < 1:
            raise ConfigError("--move-budget must be positive")
        if self.trace_path and self.transport != DETERMINISTIC:
            raise ConfigError("--trace requires the deterministic transport")

    @property
    def budget(self) -> int:
        return self.move_budget if self.move_budget is not None else DEFAULT_MOVE_BUDGET

    def parallel_config(self, lpcc: bool | None = None) -> ParallelConfig:
        on = self.lpcc if lpcc is None else lpcc
        try:
            return ParallelConfig(
                seed=self.seed,
                interleaving_seed=self.interleaving_seed,
                transport=self.transport,
                lpcc=LpccConfig(**self.lpcc_tuning) if on else None,
                cancellation=self.cancellation,
                checkpoint_interval=self.checkpoint_interval,
                gvt_period_ms=self.gvt_period_ms,
                move_budget=self.budget,
                trace=self.trace_path is not None,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def resolve_model_path(path: str) -> tuple[str, str]:
    """Read a model file; bare names of bundled models work from any directory."""
    p = Path(path)
    if p.exists():
        return p.read_text(encoding="utf-8"), str(p)
    bundled = files("gpsswarp.models").joinpath(p.name)
    if p.parent == Path(".") and bundled.is_file():
        return bundled.read_text(encoding="utf-8"), p.name
    raise ConfigError(f"model file not found: {path}")


def load_model(path: str) -> Model:
    text, origin = resolve_model_path(path)
    return parse_model(ModelFile(text, origin))


def actuator_paths(template: str, model_path: str, lps) -> dict[int, Path]:
    stem = Path(model_path).stem
    out = {}
    for i in lps:
        name = template.format(model=stem, lp=i + 1) if "{" in template else None
        if name is None:
            p = Path(template)
            name = str(p.with_name(f"{p.stem}.lp{i + 1}{p.suffix or '.csv'}"))
        out[i] = Path(name)
    return out


def _write(path: str | Path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")


def _add_run_options(p: argparse.ArgumentParser, *, engine: bool = True) -> None:
    p.add_argument("model", help="model file (bundled: model_a.gps, model_b.gps, loop.gps)")
    if engine:
        p.add_argument("--engine", choices=("sequential", "parallel"), default="parallel")
        p.add_argument("--lpcc", choices=("on", "off"), default="off")
    p.add_argument("--cancellation", choices=(LAZY, AGGRESSIVE), default=LAZY)
    p.add_argument("--seed", type=int, default=0, help="model RNG seed")
    p.add_argument("--interleaving-seed", type=int, default=0, help="deterministic schedule seed")
    p.add_argument("--transport", choices=(DETERMINISTIC, CONCURRENT), default=DETERMINISTIC)
    p.add_argument("--checkpoint-interval", type=int, default=1)
    p.add_argument("--gvt-period", type=float, default=50.0, metavar="MS")
    p.add_argument("--move-budget", type=int, default=None)
    g = p.add_argument_group("LPCC tuning")
    g.add_argument("--lpcc-eval-every", type=int, dest="eval_every")
    g.add_argument("--lpcc-radius", type=float, dest="merge_radius")
    g.add_argument("--lpcc-capacity", type=int, dest="capacity")
    g.add_argument("--lpcc-improvement", type=float, dest="improvement")
    g.add_argument("--lpcc-hysteresis", type=float, dest="hysteresis")
    g.add_argument("--lpcc-floor", type=int, dest="floor")
    g.add_argument("--lpcc-ceiling", type=int, dest="ceiling")
    o = p.add_argument_group("outputs")
    o.add_argument("--report", dest="report_path", help="write the text report here instead of stdout")
    o.add_argument("--stats", dest="stats_path", help="write line-delimited JSON records here")
    o.add_argument("--actuator-csv", dest="actuator_csv", help="actuator trace path; {lp} and {model} expand")


def _config_from(ns: argparse.Namespace, *, lpcc: bool | None = None) -> RunConfig:
    tuning = {
        k: getattr(ns, k)
        for k in ("eval_every", "merge_radius", "capacity", "improvement", "hysteresis", "floor", "ceiling")
        if getattr(ns, k) is not None
    }
    return RunConfig(
        model_path=ns.model,
        engine=getattr(ns, "engine", "parallel"),
        lpcc=(getattr(ns, "lpcc", "off") == "on") if lpcc is None else lpcc,
        cancellation=ns.cancellation,
        seed=ns.seed,
        interleaving_seed=ns.interleaving_seed,
        transport=ns.transport,
        checkpoint_interval=ns.checkpoint_interval,
        gvt_period_ms=ns.gvt_period,
        move_budget=ns.move_budget,
        lpcc_tuning=tuning,
        report_path=ns.report_path,
        stats_path=ns.stats_path,
        actuator_csv=ns.actuator_csv,
        trace_path=getattr(ns, "trace_path", None),
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gpsswarp", description="Optimistic parallel GPSS subset simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a model")
    _add_run_options(run)
    run.add_argument("--trace", dest="trace_path", help="write every envelope (deterministic transport) as JSONL")

    cmp_ = sub.add_parser("compare", help="run with the LPCC on and off and tabulate both")
    _add_run_options(cmp_, engine=False)

    chk = sub.add_parser("check", help="parse a model and print its canonical form and cross-partition edges")
    chk.add_argument("model")
    return parser


def _emit_report(cfg: RunConfig, report: FinalReport, out) -> None:
    text = report.render_text()
    if cfg.report_path:
        _write(cfg.report_path, text)
    else:
        out.write(text)
    if cfg.stats_path:
        _write(cfg.stats_path, report.to_jsonl())


def _emit_traces(cfg: RunConfig, result, lpcc_on: bool) -> list[Path]:
    if not lpcc_on:
        return []
    template = cfg.actuator_csv or "{model}_actuator_lp{lp}.csv"
    paths = actuator_paths(template, cfg.model_path, [lp.index for lp in result.lps])
    for lp in result.lps:
        _write(paths[lp.index], format_trace(lp.lpcc.trace))
    return list(paths.values())


def _budget_failure(exc: MoveBudgetExceeded, err) -> int:
    err.write(f"error: {exc}\n")
    if exc.partial:
        err.write(render_stats(exc.partial) + "\n")
    return EXIT_BUDGET


def cmd_run(cfg: RunConfig, out, err) -> int:
    cfg.validate()
    model = load_model(cfg.model_path)
    if cfg.engine == "sequential":
        report = run_sequential(model, cfg.seed, move_budget=cfg.budget)
        _emit_report(cfg, report, out)
        return EXIT_OK
    result = run_parallel(model, cfg.parallel_config())
    _emit_report(cfg, result.report, out)
    for path in _emit_traces(cfg, result, cfg.lpcc):
        err.write(f"actuator trace written to {path}\n")
    if cfg.trace_path:
        with open(cfg.trace_path, "w", encoding="utf-8") as fh:
            for kind, src, dst, seq, wire in result.safety.trace:
                fh.write(json.dumps({"event": kind, "src": src, "dst": dst, "seq": seq, "payload": json.loads(wire)}) + "\n")
    problems = result.violations()
    for p in problems:
        err.write(f"protocol violation: {p}\n")
    return EXIT_OK


def render_comparison(on: FinalReport, off: FinalReport) -> str:
    stats: list[LpStats] = []
    cols: list[str] = []
    for i, (a, b) in enumerate(zip(on.lp_stats, off.lp_stats)):
        stats += [a, b]
        cols += [f"LP{i + 1} LPCC on", f"LP{i + 1} LPCC off"]
    lines = [render_stats(stats, cols), ""]
    total_on = sum(s.rolled_back for s in on.lp_stats)
    total_off = sum(s.rolled_back for s in off.lp_stats)
    if total_off:
        pct = 100.0 * (total_off - total_on) / total_off
        lines.append(f"Rolled back moves: {total_on} with LPCC on, {total_off} off ({pct:+.1f}% reduction)")
    else:
        lines.append(f"Rolled back moves: {total_on} with LPCC on, 0 off")
    exe_on = sum(s.executed for s in on.lp_stats)
    exe_off = sum(s.executed for s in off.lp_stats)
    lines.append(f"Simulated moves:   {exe_on} with LPCC on, {exe_off} off")
    lines.append(f"Wall time:         {on.wall_ms:.1f} ms with LPCC on, {off.wall_ms:.1f} ms off")
    return "\n".join(lines) + "\n"


def cmd_compare(cfg: RunConfig, out, err) -> int:
    cfg.engine = "parallel"
    cfg.validate()
    model = load_model(cfg.model_path)
    on = run_parallel(model, cfg.parallel_config(lpcc=True))
    off = run_parallel(model, cfg.parallel_config(lpcc=False))
    if on.report.outcome() != off.report.outcome():  # pragma: no cover - would be an engine bug
        err.write("error: LPCC on and off runs reached different end states\n")
        return EXIT_ERROR
    text = render_comparison(on.report, off.report)
    if cfg.report_path:
        _write(cfg.report_path, text)
    else:
        out.write(text)
    if cfg.stats_path:
        on.report.meta["label"] = "LPCC on"
        off.report.meta["label"] = "LPCC off"
        _write(cfg.stats_path, on.report.to_jsonl() + off.report.to_jsonl())
    for path in _emit_traces(cfg, on, True):
        err.write(f"actuator trace written to {path}\n")
    return EXIT_OK


def cmd_check(path: str, out) -> int:
    model = load_model(path)
    out.write(format_model(model))
    edges = validate_topology(model)
    out.write(f"* {len(model.partitions)} partition(s), {len(edges)} cross-partition edge(s)\n")
    for e in edges:
        (sp, sb), (dp, db) = e.source, e.destination
        out.write(f"*   {model.partitions[sp].name}[{sb}] -> {model.partitions[dp].name}[{db}]\n")
    return EXIT_OK


def main(argv: list[str] | None = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    try:
        if ns.command == "check":
            return cmd_check(ns.model, out)
        cfg = _config_from(ns)
        if ns.command == "compare":
            return cmd_compare(cfg, out, err)
        return cmd_run(cfg, out, err)
    except (ParseError, ConfigError, OSError) as exc:
        err.write(f"error: {exc}\n")
        return EXIT_ERROR
    except MoveBudgetExceeded as exc:
        return _budget_failure(exc, err)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
