"""Parser for the GPSS/H subset used by partitioned models.

A model file is line oriented::

    PARTITION Partition1,20000
            GENERATE 1,0
            TRANSFER 0.001,Label1
            TERMINATE 0
    PARTITION Partition2,20000
            GENERATE 4,0,5000
    Label1  TERMINATE 1

Each statement is an optional label, an opcode and one comma-separated
operand field.  ``*`` at the start of a statement and ``;`` anywhere start a
comment.  Opcodes are case-insensitive, labels are case-sensitive.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Union

__all__ = [
    "ParseError",
    "ModelFile",
    "Generate",
    "Transfer",
    "Terminate",
    "Block",
    "Partition",
    "Model",
    "CrossPartitionEdge",
    "parse_model",
    "parse_text",
    "validate_topology",
    "format_model",
    "fallthrough",
]

OPCODES = ("PARTITION", "GENERATE", "TRANSFER", "TERMINATE")

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_.$]*\Z")
_INT = re.compile(r"[0-9]+\Z")
_DECIMAL = re.compile(r"(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)\Z")


class ParseError(ValueError):
    """Raised for any malformed model; carries a 1-based line and column."""

    def __init__(self, message: str, line: int = 0, column: int = 0, origin: str = "<model>"):
        self.message = message
        self.line = line
        self.column = column
        self.origin = origin
        where = f"{origin}:{line}:{column}: " if line else f"{origin}: "
        super().__init__(where + message)


@dataclass(frozen=True)
class ModelFile:
    text: str
    origin: str = "<model>"


@dataclass(frozen=True)
class Generate:
    mean: int
    spread: int = 0
    offset: int | None = None
    label: str | None = None


@dataclass(frozen=True)
class Transfer:
    probability: Fraction
    target: str
    label: str | None = None


@dataclass(frozen=True)
class Terminate:
    decrement: int = 0
    label: str | None = None


Block = Union[Generate, Transfer, Terminate]


@dataclass(frozen=True)
class Partition:
    name: str
    counter: int
    blocks: tuple[Block, ...]


@dataclass(frozen=True)
class Model:
    partitions: tuple[Partition, ...]
    labels: dict[str, tuple[int, int]] = field(compare=False, hash=False)

    def partition_index(self, name: str) -> int:
        for i, p in enumerate(self.partitions):
            if p.name == name:
                return i
        raise KeyError(name)

    def resolve(self, label: str) -> tuple[int, int]:
        return self.labels[label]


@dataclass(frozen=True, order=True)
class CrossPartitionEdge:
    source: tuple[int, int]
    destination: tuple[int, int]


def fallthrough(blocks: tuple[Block, ...] | list[Block], index: int) -> int | None:
    """Index of the block a transaction reaches by leaving ``index`` sequentially.

    GENERATE blocks are skipped: transactions are created by them, never
    entered from above.
    """
    j = index + 1
    while j < len(blocks):
        if not isinstance(blocks[j], Generate):
            return j
        j += 1
    return None


# --------------------------------------------------------------------- parser


@dataclass
class _Stmt:
    line: int
    label: str | None
    label_col: int
    opcode: str
    op_col: int
    operands: list[str]
    operand_col: int


def _split_statement(raw: str, lineno: int, origin: str) -> _Stmt | None:
    text = raw.split(";", 1)[0]
    stripped = text.strip()
    if not stripped or stripped.startswith("*"):
        return None
    tokens = [(m.group(0), m.start() + 1) for m in re.finditer(r"\S+", text)]
    # trailing comment after the operand field
    for k, (tok, _col) in enumerate(tokens):
        if k > 0 and tok.startswith("*"):
            tokens = tokens[:k]
            break

    label = None
    label_col = 0
    first, first_col = tokens[0]
    if first.upper() in OPCODES:
        op_tok, op_col = first, first_col
        rest = tokens[1:]
    else:
        if len(tokens) < 2 or tokens[1][0].upper() not in OPCODES:
            # "LABEL BADOP ops" or "LABEL BADOP" blame the second token, "BADOP ops" the first
            if len(tokens) >= 3 or (len(tokens) == 2 and _IDENT.match(tokens[1][0])):
                raise ParseError(f"unknown opcode {tokens[1][0]!r}", lineno, tokens[1][1], origin)
            raise ParseError(f"unknown opcode {first!r}", lineno, first_col, origin)
        label, label_col = first, first_col
        if not _IDENT.match(label):
            raise ParseError(f"invalid label {label!r}", lineno, label_col, origin)
        op_tok, op_col = tokens[1]
        rest = tokens[2:]

    if len(rest) > 1:
        raise ParseError(
            f"unexpected text {rest[1][0]!r} after operands (operands must not contain spaces)",
            lineno,
            rest[1][1],
            origin,
        )
    if rest:
        operands = rest[0][0].split(",")
        operand_col = rest[0][1]
    else:
        operands = []
        operand_col = op_col + len(op_tok)
    return _Stmt(lineno, label, label_col, op_tok.upper(), op_col, operands, operand_col)


def _operand_cols(stmt: _Stmt) -> list[int]:
    cols = []
    col = stmt.operand_col
    for operand in stmt.operands:
        cols.append(col)
        col += len(operand) + 1
    return cols


def _int_operand(stmt: _Stmt, i: int, what: str, origin: str, *, default: int | None = None) -> int | None:
    cols = _operand_cols(stmt)
    if i >= len(stmt.operands) or stmt.operands[i] == "":
        if default is None and what:
            raise ParseError(f"missing {what}", stmt.line, cols[i] if i < len(cols) else stmt.operand_col, origin)
        return default
    tok = stmt.operands[i]
    if not _INT.match(tok):
        raise ParseError(f"{what} must be a non-negative integer, got {tok!r}", stmt.line, cols[i], origin)
    return int(tok)


def _check_arity(stmt: _Stmt, lo: int, hi: int, origin: str) -> None:
    n = len(stmt.operands)
    if n < lo or n > hi:
        if lo == hi:
            expected = f"{lo}"
        else:
            expected = f"{lo} to {hi}"
        raise ParseError(
            f"{stmt.opcode} takes {expected} operands, got {n}", stmt.line, stmt.operand_col, origin
        )


def parse_text(text: str, origin: str = "<model>") -> Model:
    return parse_model(ModelFile(text, origin))


def parse_model(file: ModelFile) -> Model:
    """Parse and validate a model file.

    Raises :class:`ParseError` for syntax errors, unknown opcodes, duplicate
    or unresolved labels, non-positive counters and out-of-range operands.
    """
    origin = file.origin
    text = file.text
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"model is not valid UTF-8 ({exc.reason})", origin=origin) from None

    parts: list[tuple[str, int, list[Block], int]] = []
    label_sites: dict[str, tuple[int, int, int, int]] = {}  # label -> (part, block, line, col)
    transfer_sites: list[tuple[int, int, str, int, int]] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        if "\x00" in raw:
            raise ParseError("NUL byte in model text", lineno, raw.index("\x00") + 1, origin)
        stmt = _split_statement(raw, lineno, origin)
        if stmt is None:
            continue

        if stmt.opcode == "PARTITION":
            if stmt.label is not None:
                raise ParseError("PARTITION statements cannot carry a label", lineno, stmt.label_col, origin)
            _check_arity(stmt, 2, 2, origin)
            name = stmt.operands[0]
            if not _IDENT.match(name):
                raise ParseError(f"invalid partition name {name!r}", lineno, stmt.operand_col, origin)
            if any(p[0] == name for p in parts):
                raise ParseError(f"duplicate partition {name!r}", lineno, stmt.operand_col, origin)
            counter_tok = stmt.operands[1]
            col = _operand_cols(stmt)[1]
            if not re.fullmatch(r"-?[0-9]+", counter_tok):
                raise ParseError(f"termination counter must be an integer, got {counter_tok!r}", lineno, col, origin)
            counter = int(counter_tok)
            if counter <= 0:
                raise ParseError(f"termination counter must be positive, got {counter}", lineno, col, origin)
            parts.append((name, counter, [], lineno))
            continue

        if not parts:
            raise ParseError(f"{stmt.opcode} outside of a PARTITION", lineno, stmt.op_col, origin)
        p_index = len(parts) - 1
        blocks = parts[-1][2]
        b_index = len(blocks)
        label = stmt.label
        if label is not None:
            if label in label_sites:
                prev = label_sites[label]
                raise ParseError(
                    f"duplicate label {label!r} (first defined on line {prev[2]})", lineno, stmt.label_col, origin
                )
            label_sites[label] = (p_index, b_index, lineno, stmt.label_col)

        if stmt.opcode == "GENERATE":
            _check_arity(stmt, 1, 3, origin)
            mean = _int_operand(stmt, 0, "mean interarrival time", origin)
            spread = _int_operand(stmt, 1, "", origin, default=0)
            offset = _int_operand(stmt, 2, "", origin, default=None)
            cols = _operand_cols(stmt)
            if mean <= 0:
                raise ParseError("mean interarrival time must be positive", lineno, cols[0], origin)
            if spread >= mean:
                raise ParseError(
                    f"spread {spread} must be smaller than the mean {mean} (zero-length intervals)",
                    lineno,
                    cols[1],
                    origin,
                )
            blocks.append(Generate(mean, spread, offset, label))
        elif stmt.opcode == "TRANSFER":
            _check_arity(stmt, 2, 2, origin)
            cols = _operand_cols(stmt)
            ptok, target = stmt.operands
            if not _DECIMAL.match(ptok):
                raise ParseError(f"transfer probability must be a decimal number, got {ptok!r}", lineno, cols[0], origin)
            prob = Fraction(ptok)
            if prob > 1:
                raise ParseError(f"transfer probability {ptok} out of range [0,1]", lineno, cols[0], origin)
            if not _IDENT.match(target):
                raise ParseError(f"invalid label {target!r}", lineno, cols[1], origin)
            blocks.append(Transfer(prob, target, label))
            transfer_sites.append((p_index, b_index, target, lineno, cols[1]))
        elif stmt.opcode == "TERMINATE":
            _check_arity(stmt, 0, 1, origin)
            dec = _int_operand(stmt, 0, "", origin, default=0)
            blocks.append(Terminate(dec, label))
        else:  # pragma: no cover - OPCODES is exhaustive
            raise ParseError(f"unknown opcode {stmt.opcode!r}", lineno, stmt.op_col, origin)

    if not parts:
        raise ParseError("no partitions", origin=origin)

    labels = {name: (p, b) for name, (p, b, _l, _c) in label_sites.items()}
    for p_index, b_index, target, lineno, col in transfer_sites:
        if target not in labels:
            raise ParseError(f"unresolved TRANSFER target {target!r}", lineno, col, origin)
        tp, tb = labels[target]
        if isinstance(parts[tp][2][tb], Generate):
            raise ParseError(f"TRANSFER target {target!r} is a GENERATE block", lineno, col, origin)

    partitions = []
    for name, counter, blocks, lineno in parts:
        if not any(isinstance(b, Generate) for b in blocks):
            raise ParseError(f"partition {name!r} has no GENERATE block", lineno, 1, origin)
        if not any(isinstance(b, Terminate) for b in blocks):
            raise ParseError(f"partition {name!r} has no TERMINATE block", lineno, 1, origin)
        for i, block in enumerate(blocks):
            falls = isinstance(block, Generate) or (isinstance(block, Transfer) and block.probability < 1)
            if falls and fallthrough(blocks, i) is None:
                raise ParseError(
                    f"partition {name!r}: control falls off the end after block {i}", lineno, 1, origin
                )
        partitions.append(Partition(name, counter, tuple(blocks)))
    return Model(tuple(partitions), labels)


# ------------------------------------------------------------------ topology


def validate_topology(model: Model) -> list[CrossPartitionEdge]:
    """Every TRANSFER whose target lives in another partition, in model order."""
    edges = []
    for p_index, part in enumerate(model.partitions):
        for b_index, block in enumerate(part.blocks):
            if isinstance(block, Transfer):
                dest = model.labels[block.target]
                if dest[0] != p_index:
                    edges.append(CrossPartitionEdge((p_index, b_index), dest))
    return edges


# -------------------------------------------------------------- serialization


def _decimal(q: Fraction) -> str:
    if q.denominator == 1:
        return f"{q.numerator}.0"
    for digits in range(1, 400):
        scaled = q * 10**digits
        if scaled.denominator == 1:
            s = str(scaled.numerator).rjust(digits + 1, "0")
            return f"{s[:-digits]}.{s[-digits:]}"
    raise ValueError(f"{q} has no finite decimal expansion")


def format_model(model: Model) -> str:
    """Canonical text form; ``parse_text(format_model(m)) == m``."""
    lines = []
    for part in model.partitions:
        lines.append(f"PARTITION {part.name},{part.counter}")
        for block in part.blocks:
            label = block.label or ""
            if isinstance(block, Generate):
                ops = f"{block.mean},{block.spread}"
                if block.offset is not None:
                    ops += f",{block.offset}"
                stmt = f"GENERATE {ops}"
            elif isinstance(block, Transfer):
                stmt = f"TRANSFER {_decimal(block.probability)},{block.target}"
            else:
                stmt = f"TERMINATE {block.decrement}"
            lines.append(f"{label:<10}{stmt}".rstrip() if label else f"{'':<10}{stmt}")
    return "\n".join(lines) + "\n"
