"""Integer mixing used to label feature cells.

A cell of the additive tile layout is identified by (group, layer, bin per
dimension in the group).  Rather than materialising tuples we fold those
integers through a splitmix64-style chain; two cells receive the same label
only on a 64-bit hash collision, which callers guard against with a second,
independently salted hash (see :mod:`ebo.features`).

Overflow is the point of the construction: every operation is modulo 2^64,
so NumPy's overflow warnings are explicitly silenced here (0-d arrays go
through the scalar path, which would otherwise warn).
"""

from __future__ import annotations

import numpy as np

_C1 = np.uint64(0x9E3779B97F4A7C15)
_C2 = np.uint64(0xBF58476D1CE4E5B9)
_C3 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)


def mix(state: np.ndarray, value: np.ndarray | int) -> np.ndarray:
    """Fold ``value`` into ``state`` (both uint64, broadcastable) and return
    a well-scrambled new state."""
    with np.errstate(over="ignore"):
        z = np.asarray(state, dtype=np.uint64) + (
            np.asarray(value, dtype=np.uint64) + _C1
        )
        z = (z ^ (z >> _S30)) * _C2
        z = (z ^ (z >> _S27)) * _C3
        return z ^ (z >> _S31)


def seed_state(*parts: int) -> np.ndarray:
    """Deterministic 0-d uint64 state from a sequence of small integers."""
    h = np.zeros((), dtype=np.uint64)
    for p in parts:
        h = mix(h, np.uint64(p & 0xFFFFFFFFFFFFFFFF))
    return h


def chain(state: np.ndarray, columns: list[np.ndarray]) -> np.ndarray:
    """Fold each column (int64/uint64 arrays of equal length) into ``state``.

    Returns a uint64 array of per-row labels.  The fold order is the order of
    ``columns``, so callers must present dimensions in a canonical (sorted)
    order for labels to be comparable.
    """
    h = np.broadcast_to(np.asarray(state, dtype=np.uint64), columns[0].shape).copy()
    for col in columns:
        h = mix(h, col.astype(np.uint64, copy=False))
    return h
