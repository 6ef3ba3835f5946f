"""Per-LP processing counters (the rows of the comparison table)."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields


@dataclass
class LpStats:
    executed: int = 0  # every forward move, including ones later undone
    committed: int = 0
    rolled_back: int = 0
    discarded: int = 0  # executed beyond the confirmed end key
    rollbacks: int = 0
    coast_forward: int = 0
    sent: int = 0
    received: int = 0
    suppressed: int = 0  # regenerated sends matched by lazy cancellation
    anti_sent: int = 0
    anti_received: int = 0
    cancelbacks_sent: int = 0
    cancelbacks_received: int = 0
    cancelback_entries: int = 0

    @property
    def uncommitted(self) -> int:
        return self.executed - self.committed - self.rolled_back - self.discarded

    def reconciles(self, uncommitted: int = 0) -> bool:
        return self.executed == self.committed + self.rolled_back + self.discarded + uncommitted

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "LpStats":
        names = {f.name for f in fields(cls)}
        return cls(**{k: int(v) for k, v in d.items() if k in names})

    def copy(self) -> "LpStats":
        return LpStats(**asdict(self))
