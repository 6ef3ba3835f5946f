"""Block semantics, partition engines and the sequential reference simulator.

The partition engine exists twice: a compiled Cython extension and a
pure-Python module with identical behaviour.  The compiled one is used when
it imports; set ``GPSSWARP_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pyengine
from .entities import (
    DEPARTED,
    INF_KEY,
    MIN_KEY,
    TERMINATED,
    EventKey,
    Rng,
    Transaction,
    event_key,
    hash_words,
    move_key,
)
from .program import PartitionProgram, compile_model, compile_partition

PythonEngine = _pyengine.PartitionEngine

try:
    if os.environ.get("GPSSWARP_PURE_PYTHON"):
        raise ImportError("pure python requested")
    from ._cengine import PartitionEngine as CompiledEngine
except ImportError:
    CompiledEngine = None

PartitionEngine = CompiledEngine or PythonEngine
BACKEND = PartitionEngine.backend

ENGINES = {"python": PythonEngine}
if CompiledEngine is not None:
    ENGINES["cython"] = CompiledEngine


def engine_class(backend: str | None = None):
    """Engine class for ``backend`` ("python", "cython" or None for the default)."""
    if backend is None:
        return PartitionEngine
    try:
        return ENGINES[backend]
    except KeyError:
        raise ValueError(f"engine backend {backend!r} is not available (have {sorted(ENGINES)})") from None


from .sequential import MoveBudgetExceeded, execute_move, next_arrival, run_sequential, sequential_end_state  # noqa: E402

__all__ = [
    "BACKEND",
    "DEPARTED",
    "ENGINES",
    "INF_KEY",
    "MIN_KEY",
    "TERMINATED",
    "EventKey",
    "MoveBudgetExceeded",
    "PartitionEngine",
    "PartitionProgram",
    "PythonEngine",
    "CompiledEngine",
    "Rng",
    "Transaction",
    "compile_model",
    "compile_partition",
    "engine_class",
    "event_key",
    "execute_move",
    "hash_words",
    "move_key",
    "next_arrival",
    "run_sequential",
    "sequential_end_state",
]
