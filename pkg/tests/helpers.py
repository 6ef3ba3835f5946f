"""Shared fixtures for the test suite: bundled models and a small-model generator."""

from __future__ import annotations

import random
from importlib.resources import files

from gpsswarp.model import Model, ModelFile, parse_model

BUNDLED = ("model_a.gps", "model_b.gps", "loop.gps")


def bundled_text(name: str) -> str:
    return files("gpsswarp.models").joinpath(name).read_text(encoding="utf-8")


def bundled(name: str) -> Model:
    return parse_model(ModelFile(bundled_text(name), name))


def random_model_text(rng: random.Random, *, partitions: int | None = None) -> str:
    """A small valid model with random cross-partition traffic.

    Transfer probabilities stay at or below 0.9 so that zero-time loops end
    quickly; falling through always reaches a counting TERMINATE.
    """
    n = partitions or rng.randint(2, 3)
    parts = []
    targets = []
    for p in range(n):
        blocks = []
        gens = 1 + (rng.random() < 0.3)
        for g in range(gens):
            mean = rng.randint(1, 6)
            spread = rng.randint(0, mean - 1)
            ops = [str(mean), str(spread)]
            if rng.random() < 0.4:
                ops.append(str(rng.randint(0, 300)))
            blocks.append((None, "GENERATE", ",".join(ops)))
        for t in range(rng.randint(1, 2)):
            label = f"T{p}_{t}"
            blocks.append((label, "TRANSFER", None))
            targets.append(label)
        label = f"E{p}"
        blocks.append((label, "TERMINATE", "1"))
        targets.append(label)
        if rng.random() < 0.5:
            label = f"Z{p}"
            blocks.append((label, "TERMINATE", "0"))
            targets.append(label)
        parts.append((f"P{p + 1}", rng.randint(20, 150), blocks))

    lines = []
    for name, counter, blocks in parts:
        lines.append(f"PARTITION {name},{counter}")
        for label, op, operands in blocks:
            if op == "TRANSFER":
                prob = rng.randint(1, 18) * 5
                operands = f"0.{prob:02d},{rng.choice(targets)}" if prob < 100 else f"1,{rng.choice(targets)}"
            lines.append(f"{label or '':<8}{op} {operands}")
    return "\n".join(lines) + "\n"


def random_model(seed: int, **kw) -> Model:
    return parse_model(ModelFile(random_model_text(random.Random(seed), **kw), f"random{seed}"))
