"""Message payloads exchanged between Logical Processes and the controller.

Every payload has a versioned JSON wire form (:func:`to_wire` /
:func:`from_wire`).  The in-process transports pass the objects themselves;
the wire form is used for envelope traces and tests.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .kernel.entities import Transaction, key_from_json, key_to_json
from .report import PartitionReport
from .stats import LpStats

WIRE_VERSION = 1
CONTROLLER = -1


@dataclass(frozen=True, slots=True)
class TransactionMsg:
    msg_id: int
    txn: Transaction


@dataclass(frozen=True, slots=True)
class AntiTransactionMsg:
    msg_id: int
    target_id: int  # msg_id of the TransactionMsg being cancelled
    txn: Transaction


@dataclass(frozen=True, slots=True)
class CancelbackMsg:
    msg_id: int
    target_id: int  # msg_id of the TransactionMsg being returned to its sender
    txn: Transaction


@dataclass(frozen=True, slots=True)
class Ack:
    msg_id: int


@dataclass(frozen=True, slots=True)
class GvtPoll:
    round: int


@dataclass(frozen=True, slots=True)
class GvtReport:
    lp: int
    round: int
    local_min: tuple  # event key; INF_KEY for a drained LP
    sent: tuple[int, ...]  # cumulative, per destination LP
    received: tuple[int, ...]  # cumulative, per source LP
    unacked: tuple[int, ...]  # per destination LP
    provisional_end: tuple | None = None  # move key


@dataclass(frozen=True, slots=True)
class GvtResult:
    gvt: tuple
    round: int
    confirmed_end: tuple | None = None


@dataclass(frozen=True, slots=True)
class GvtRequest:
    lp: int


@dataclass(frozen=True, slots=True)
class EndBarrier:
    end_key: tuple


@dataclass(frozen=True, slots=True)
class EndAck:
    lp: int
    partition: PartitionReport
    stats: LpStats


PAYLOAD_MESSAGES = (TransactionMsg, AntiTransactionMsg, CancelbackMsg)

_TYPES = {
    cls.__name__: cls
    for cls in (
        TransactionMsg, AntiTransactionMsg, CancelbackMsg, Ack, GvtPoll, GvtReport,
        GvtResult, GvtRequest, EndBarrier, EndAck,
    )
}
_KEY_FIELDS = {"local_min", "provisional_end", "gvt", "confirmed_end", "end_key"}


def _encode(name, value):
    if name in _KEY_FIELDS:
        return key_to_json(value)
    if isinstance(value, Transaction):
        return list(value)
    if isinstance(value, PartitionReport):
        return {"name": value.name, "counter": value.counter, "entries": list(value.entries)}
    if isinstance(value, LpStats):
        return value.as_dict()
    if isinstance(value, tuple):
        return list(value)
    return value


def _decode(cls, name, value):
    if name in _KEY_FIELDS:
        return key_from_json(value)
    if name == "txn":
        return Transaction(*value)
    if name == "partition":
        return PartitionReport(value["name"], value["counter"], tuple(value["entries"]))
    if name == "stats":
        return LpStats.from_dict(value)
    if isinstance(value, list):
        return tuple(value)
    return value


def to_wire(payload) -> bytes:
    body = {"v": WIRE_VERSION, "type": type(payload).__name__}
    for name in payload.__slots__:
        body[name] = _encode(name, getattr(payload, name))
    return json.dumps(body, sort_keys=True, separators=(",", ":")).encode()


def from_wire(data: bytes):
    body = json.loads(data)
    if body.get("v") != WIRE_VERSION:
        raise ValueError(f"unsupported wire version {body.get('v')!r}")
    cls = _TYPES[body["type"]]
    return cls(**{name: _decode(cls, name, body[name]) for name in cls.__slots__})
