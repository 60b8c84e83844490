"""Pure-Python/NumPy versions of the hot kernels.

Every function here has a bit-identical twin in ``_kernels.pyx``.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_INV53 = 1.0 / (1 << 53)


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a Python int."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def replication_keys(base: int, reps: np.ndarray, tag_code: int) -> np.ndarray:
    """Per-replication stream keys derived from a (seed, point) base key."""
    reps = np.asarray(reps, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = _mix64_array(np.uint64(base) + reps * np.uint64(GOLDEN))
        return _mix64_array(z ^ np.uint64((tag_code * _M2) & MASK64))


def uniform_block(base: int, reps: np.ndarray, tag_code: int, n: int) -> np.ndarray:
    """Uniform(0, 1) draws, shape (len(reps), n); row r is counter 0..n-1 of rep r.

    Values lie strictly inside (0, 1).
    """
    keys = replication_keys(base, reps, tag_code)
    counters = (np.arange(1, n + 1, dtype=np.uint64) * np.uint64(GOLDEN))
    with np.errstate(over="ignore"):
        z = _mix64_array(keys[:, None] + counters[None, :])
    return ((z >> np.uint64(11)).astype(np.float64) + 0.5) * _INV53


def ss_costs(demand: np.ndarray, lead: np.ndarray, s: float, S: float,
             holding: float, backorder: float, fixed: float, unit: float,
             initial: float) -> np.ndarray:
    """Average per-period cost of an (s, S) policy for each row of draws.

    ``demand`` and ``lead`` have shape (reps, days); ``lead[r, t]`` is only used
    if an order is placed at the end of period ``t``.
    """
    reps, days = demand.shape
    out = np.empty(reps)
    for r in range(reps):
        d_row = demand[r].tolist()
        l_row = lead[r].tolist()
        arrivals = [0.0] * days
        level = initial
        on_order = 0.0
        total = 0.0
        for t in range(days):
            a = arrivals[t]
            level += a
            on_order -= a
            level -= d_row[t]
            position = level + on_order
            if position < s:
                qty = S - position
                total += fixed + unit * qty
                L = l_row[t]
                if L == 0:
                    level += qty
                else:
                    if t + L < days:
                        arrivals[t + L] += qty
                    on_order += qty
            if level > 0.0:
                total += holding * level
            else:
                total -= backorder * level
        out[r] = total / days
    return out
