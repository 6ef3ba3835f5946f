"""Final simulation report: text rendering and line-delimited records."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .kernel.entities import key_from_json, key_to_json
from .stats import LpStats

TABLE_ROWS = (
    ("Total committed Transaction moves", "committed"),
    ("Total Transaction moves rolled back", "rolled_back"),
    ("Total simulated Transaction moves", "executed"),
)


@dataclass(frozen=True)
class PartitionReport:
    name: str
    counter: int
    entries: tuple[int, ...]


@dataclass
class FinalReport:
    partitions: tuple[PartitionReport, ...]
    end_clock: int
    end_key: tuple  # move key of the move that ended the run
    lp_stats: tuple[LpStats, ...] = ()
    wall_ms: float = 0.0
    engine: str = "sequential"
    meta: dict = field(default_factory=dict)

    def outcome(self) -> tuple:
        """The model-level result, which must not depend on how it was computed."""
        return (self.partitions, self.end_clock, tuple(self.end_key))

    @property
    def ending_partition(self) -> int | None:
        for i, p in enumerate(self.partitions):
            if p.counter <= 0:
                return i
        return None

    # ------------------------------------------------------------ records

    def to_records(self) -> list[dict]:
        recs: list[dict] = [
            {
                "record": "run",
                "engine": self.engine,
                "end_clock": self.end_clock,
                "end_key": key_to_json(self.end_key),
                "wall_ms": self.wall_ms,
                "meta": self.meta,
            }
        ]
        for i, p in enumerate(self.partitions):
            recs.append({"record": "partition", "index": i, "name": p.name, "counter": p.counter, "entries": list(p.entries)})
        for i, s in enumerate(self.lp_stats):
            recs.append({"record": "lp", "lp": i, **s.as_dict()})
        return recs

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.to_records())

    @classmethod
    def from_records(cls, records) -> "FinalReport":
        run = None
        parts: dict[int, PartitionReport] = {}
        stats: dict[int, LpStats] = {}
        for r in records:
            kind = r["record"]
            if kind == "run":
                run = r
            elif kind == "partition":
                parts[r["index"]] = PartitionReport(r["name"], r["counter"], tuple(r["entries"]))
            elif kind == "lp":
                stats[r["lp"]] = LpStats.from_dict(r)
        if run is None:
            raise ValueError("no run record")
        return cls(
            tuple(parts[i] for i in sorted(parts)),
            run["end_clock"],
            key_from_json(run["end_key"]),
            tuple(stats[i] for i in sorted(stats)),
            run["wall_ms"],
            run["engine"],
            run.get("meta", {}),
        )

    @classmethod
    def from_jsonl(cls, text: str) -> "FinalReport":
        return cls.from_records(json.loads(line) for line in text.splitlines() if line.strip())

    # --------------------------------------------------------------- text

    def render_text(self) -> str:
        k = self.end_key
        lines = [
            f"Simulation report ({self.engine})",
            f"  end clock       {self.end_clock}",
            f"  ending move     time {k[0]}, priority {-k[1]}, transaction {k[2]}.{k[3]} (hop {k[4]})",
        ]
        if self.wall_ms:
            label = "virtual time   " if self.meta.get("transport") == "deterministic" else "wall time      "
            lines.append(f"  {label} {self.wall_ms:.1f} ms")
        for p in self.partitions:
            lines.append("")
            lines.append(f"PARTITION {p.name}  termination counter {p.counter}")
            lines.append("  block  entries")
            for b, n in enumerate(p.entries):
                lines.append(f"  {b:>5}  {n:>7}")
        if self.lp_stats:
            lines.append("")
            lines.append(render_stats(self.lp_stats, [f"LP{i + 1}" for i in range(len(self.lp_stats))]))
        return "\n".join(lines) + "\n"


def render_stats(stats, columns=None) -> str:
    """Table with the three move-count rows and one column per entry of ``stats``."""
    stats = list(stats)
    if columns is None:
        columns = [f"LP{i + 1}" for i in range(len(stats))]
    head = "LP statistic item"
    width = max(len(head), *(len(r[0]) for r in TABLE_ROWS))
    colw = [max(len(c), 9) for c in columns]
    out = [head.ljust(width) + "".join("  " + c.rjust(w) for c, w in zip(columns, colw))]
    for label, attr in TABLE_ROWS:
        out.append(label.ljust(width) + "".join("  " + str(getattr(s, attr)).rjust(w) for s, w in zip(stats, colw)))
    return "\n".join(out)
