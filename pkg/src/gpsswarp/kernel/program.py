"""Flattened per-partition block tables consumed by the engines."""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..model import Generate, Model, Terminate, Transfer, fallthrough
from .entities import UNIT

OP_GENERATE = 0
OP_TRANSFER = 1
OP_TERMINATE = 2


@dataclass(frozen=True)
class PartitionProgram:
    index: int
    name: str
    counter: int
    ops: tuple[int, ...]
    succ: tuple[int, ...]
    threshold: tuple[int, ...]
    target_partition: tuple[int, ...]
    target_block: tuple[int, ...]
    decrement: tuple[int, ...]
    gen_blocks: tuple[int, ...]
    gen_mean: tuple[int, ...]
    gen_spread: tuple[int, ...]
    gen_offset: tuple[int, ...]  # -1 when absent

    @property
    def n_blocks(self) -> int:
        return len(self.ops)


def compile_partition(model: Model, index: int) -> PartitionProgram:
    part = model.partitions[index]
    ops, succ, thr, tp, tb, dec = [], [], [], [], [], []
    gb, gm, gs, go = [], [], [], []
    for i, block in enumerate(part.blocks):
        nxt = fallthrough(part.blocks, i)
        succ.append(-1 if nxt is None else nxt)
        if isinstance(block, Generate):
            ops.append(OP_GENERATE)
            thr.append(0)
            tp.append(-1)
            tb.append(-1)
            dec.append(0)
            gb.append(i)
            gm.append(block.mean)
            gs.append(block.spread)
            go.append(-1 if block.offset is None else block.offset)
        elif isinstance(block, Transfer):
            ops.append(OP_TRANSFER)
            thr.append(math.floor(block.probability * UNIT))
            dest = model.labels[block.target]
            tp.append(dest[0])
            tb.append(dest[1])
            dec.append(0)
        elif isinstance(block, Terminate):
            ops.append(OP_TERMINATE)
            thr.append(0)
            tp.append(-1)
            tb.append(-1)
            dec.append(block.decrement)
        else:  # pragma: no cover
            raise TypeError(block)
    return PartitionProgram(
        index, part.name, part.counter, tuple(ops), tuple(succ), tuple(thr), tuple(tp), tuple(tb),
        tuple(dec), tuple(gb), tuple(gm), tuple(gs), tuple(go),
    )


def compile_model(model: Model) -> tuple[PartitionProgram, ...]:
    return tuple(compile_partition(model, i) for i in range(len(model.partitions)))
