from __future__ import annotations

import numpy as np


class BudgetExhausted(Exception):
    """Raised when the run's budget is used up. Ends a run; not an error."""


class BudgetLedger:
    """Fractional budget accounting in highest-fidelity-equivalent units.

    ``spent`` is always recomputed from the per-level counters, so it equals
    the cost-weighted query count exactly.
    """

    def __init__(self, costs, limit: float = float("inf")):
        self.costs = np.asarray(costs, dtype=float)
        if self.costs.ndim != 1 or np.any(self.costs <= 0):
            raise ValueError("cost vector must be positive")
        self.limit = float(limit)
        self.queries = np.zeros(len(self.costs), dtype=np.int64)

    @property
    def spent(self) -> float:
        return float(self.costs @ self.queries)

    @property
    def remaining(self) -> float:
        return self.limit - self.spent

    @property
    def exhausted(self) -> bool:
        return self.spent >= self.limit

    def charge(self, level: int, count: int, allow_overshoot: bool = False) -> "BudgetLedger":
        """Book ``count`` queries at ``level``.

        Without ``allow_overshoot`` a batch that would cross the limit is
        refused. With it, any batch starting below the limit is booked (the
        overshoot of one in-flight batch); once at or over the limit every
        further charge is refused.
        """
        if count < 0:
            raise ValueError("count must be >= 0")
        if count == 0:
            return self
        cost = self.costs[level] * count
        if self.exhausted or (not allow_overshoot and self.spent + cost > self.limit):
            raise BudgetExhausted(f"budget {self.limit:g} exhausted at {self.spent:g}")
        self.queries[level] += count
        return self

    def __repr__(self):
        return f"BudgetLedger(spent={self.spent:g}, limit={self.limit:g}, queries={self.queries.tolist()})"
